# %% [markdown]
# # Ultrafast extreme events, end to end
#
# Plant a handful of sub-second crashes and spikes into a synthetic day,
# detect them, then look at the quote side and the recovery afterwards.
# Run with ``python demos/walkthrough.py``.

# %%
import numpy as np

from ueekit import synth
from ueekit.detect import DEFAULT_CRITERIA, TWO_SECOND_CRITERIA, Direction, detect_events
from ueekit.ingest import NS_PER_SECOND, format_timestamp
from ueekit.quotes import analyze_event, average_spread_profile
from ueekit.recovery import recovery_curves, recovery_series
from ueekit.report import summary_csv, summary_table

H = 3600 * NS_PER_SECOND

# %% [markdown]
# ## A day with planted events
#
# The baseline is a random walk that never produces an event on its own.
# Each ``PlantSpec`` describes one event: direction, net return, number of
# trades and how long the run lasts.  The last two specs are near misses.

# %%
specs = [
    (synth.PlantSpec(Direction.FLASH_CRASH, -0.012, 14, NS_PER_SECOND, 9 * H + 45 * 60 * NS_PER_SECOND,
                     quote_gap=-0.01, recovery=synth.recovery_path(np.random.default_rng(0), "full")), ""),
    (synth.PlantSpec(Direction.FLASH_SPIKE, 0.015, 25, NS_PER_SECOND // 2, 11 * H,
                     quote_gap=0.012, recovery=(0.1, 0.3, 0.5, 0.9)), ""),
    (synth.PlantSpec(Direction.FLASH_CRASH, -0.010, 10, NS_PER_SECOND, 13 * H), "ten trades"),
    (synth.PlantSpec(Direction.FLASH_SPIKE, 0.011, 20, int(1.6 * NS_PER_SECOND), 15 * H), "1.6 s"),
]
day, planted = synth.build_day(seed=1, symbol="DEMO", date="2021-01-04", specs=specs)
print(f"{len(day.trades)} trades, {len(day.quotes)} quotes")
for p in planted:
    print(f"{p.plant_id}  {p.direction.value:5s}  r={p.r_uee:+.4f}  "
          f"1.5s:{p.detected('1.5s')!s:5s}  2.0s:{p.detected('2.0s')}  {p.reason}")

# %% [markdown]
# ## Detection under both duration limits

# %%
found = {c.label: detect_events(day.trades, c) for c in (DEFAULT_CRITERIA, TWO_SECOND_CRITERIA)}
for label, events in found.items():
    for e in events:
        print(f"[{label}] {e.direction.value:5s} {format_timestamp(e.t_start)}  "
              f"trades to t_change={e.trade_count}  duration={e.duration / 1e6:.0f} ms  r={e.r_uee:+.4f}")
print(summary_csv(summary_table(found)))

# %% [markdown]
# ## Quote side
#
# The largest consecutive bid (crash) or ask (spike) move during the event,
# the volume traded up to the change trade, and relative spreads over the
# 400 quote updates either side of the start.

# %%
analytics = [analyze_event(e, day.trades, day.quotes) for e in found["1.5s"]]
for a in analytics:
    m = a.quote_move
    print(f"{a.event.event_id}: {m.side.value} moved {m.value:+.4f}, {a.volume.shares} shares")
profile = average_spread_profile([a.window for a in analytics if a.window is not None])
W = (len(profile) - 1) // 2
print(f"mean relative spread 400 updates before: {profile[0]:.5f}, at the start: {profile[W]:.5f}")

# %% [markdown]
# ## Recovery
#
# The ratio compares each later trade with the event's start and end
# prices: 1 means fully recovered, 0 means still at the extreme.

# %%
series = [recovery_series(e, day.trades, n_max=20) for e in found["1.5s"]]
for s in series:
    print(s.event_id, np.round(s.eta[:6], 3))
curves = recovery_curves(series, n_max=20)
for d, c in curves.items():
    if c.samples.any():
        print(f"{d.value}: P(eta >= 0.8) over the first 6 trades = {np.round(c.p_high[:6], 2)}")
