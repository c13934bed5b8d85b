"""Closed-loop calibration and evaluation on the standard synthetic benchmark.

Trains the full mixture decoder from zero over incremental closed-loop
sessions (30% assistance, positions carrying over), freezes it, evaluates a
test session with every performance indicator, and puts the reaching success
rate next to the random-walk chance baseline.
"""

from markovmix.config import standard_benchmark
from markovmix.experiment import run_experiment
from markovmix.metrics import indicator_report
from markovmix.simulator import chance_baseline, make_schedule

cfg = standard_benchmark(train_sessions=4, test_sessions=1)
print("training 4 sessions, then one frozen test session...")
result = run_experiment(cfg)
decoder = result.decoder
print(f"calibration updates: {decoder.n_calibrations}")
print(f"selected ranks: experts "
      f"{[e.best_factors for e in decoder.experts if e.n_updates]} "
      f"gate {decoder.gating.classifier.best_factors}")

log = result.test_logs[0]
report = indicator_report(log, cfg.layout)
print(f"\ntest phase over {report['duration_s']:.0f}s:")
print(f"  macro accuracy {report['accuracy']:.3f}, macro F-score {report['f_score']:.3f}")
print(f"  latency {report['latency']['mean_s']:.2f}s over {report['latency']['n']} switches")
print(f"  error blocks {report['error_blocks']['rate_per_min']:.2f}/min")
for name, value in report["cos_sim"].items():
    print(f"  cosine similarity {name}: {value:.3f}")
for name, reach in report["reach"].items():
    print(f"  {name}: SR {reach['sr_percent']:.0f}% "
          f"R-ratio {reach['r_ratio_mean']:.2f} +- {reach['r_ratio_sd']:.2f}")

print("\nrandom-walk chance baseline (30 runs):")
schedule = make_schedule(cfg.layout, cycles=cfg.schedule.cycles,
                         trials_per_task=cfg.schedule.trials_per_task,
                         idle_s=cfg.schedule.idle_s)
chance = chance_baseline(schedule, cfg.settings(), n_runs=30, seed=1)
for name, stats in chance.items():
    print(f"  {name}: SR {stats['sr'].mean():.1f} +- {stats['sr'].std():.1f}%")

print("\nconvergence of the selected expert models (coefficient change per update):")
for state, series in decoder.convergence_series().items():
    trail = " ".join(f"{v:.3f}" for v in series[-6:])
    print(f"  {cfg.layout.state_names[state]}: ... {trail}")
