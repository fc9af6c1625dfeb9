"""Command-line laboratory around the library.

Subcommands: ``analytic`` (closed-form threshold evaluation), ``optimize``
(threshold search, optionally under a risk budget), ``simulate`` (seeded
policy rollouts), ``train`` (one learning run with a table dump) and
``reproduce`` (canned experiment presets writing CSV and plot data).

Exit codes: 0 success, 1 usage or validation error, 2 infeasible risk
budget, 3 file I/O error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .analytic import (
    AnalyticInapplicableError,
    InfeasibleRiskBudgetError,
    cost_breakdown,
    evaluate_threshold,
    optimal_threshold,
    risk_constrained_threshold,
    risky_frequency,
    threshold_cost_qaoi,
)
from .experiments import (
    ComparisonResult,
    EnvSpec,
    ExperimentConfig,
    ResultRow,
    comparison_rows,
    emit_plot_data,
    emit_results,
    evaluate,
    format_summary,
    learning_comparison,
    query_prob_sweep,
    sweep_rows,
    threshold_sweep,
)
from .learning import LearningParams, train
from .params import QuerySpec, RiskSpec, SourceSpec, SystemParams

__all__ = [
    "CliConfig",
    "UsageError",
    "parse_config_text",
    "format_config_text",
    "main",
]


class UsageError(Exception):
    """Bad flags, bad config keys or invalid value combinations."""


# every key a configuration file may set; flags of the same name win
CONFIG_SCHEMA: dict[str, type] = {
    "p": float,
    "lambda": float,
    "nu": float,
    "alpha": float,
    "beta": float,
    "q": float,
    "p_r": float,
    "num_states": int,
    "zeta": int,
    "zeta_aoii": int,
    "rho": float,
    "gamma": float,
    "epsilon0": float,
    "delta": float,
    "epsilon_min": float,
    "learn_steps": int,
    "test_steps": int,
    "runs": int,
    "a_max": int,
    "seed": int,
    "threshold": int,
    "metric": str,
}

_DEFAULTS = {
    "p": 0.9,
    "lambda": 0.5,
    "nu": 1.0,
    "alpha": 1.0,
    "beta": 3.0,
    "q": 0.2,
    "p_r": 0.5,
    "num_states": 10,
    "zeta": 5,
    "zeta_aoii": 3,
    "rho": 2.0,
    "gamma": 0.7,
    "epsilon0": 0.9,
    "delta": 0.999,
    "epsilon_min": 0.0,
    "learn_steps": 100_000,
    "test_steps": 10_000,
    "runs": 100,
    "a_max": 128,
    "seed": 0,
    "threshold": None,
    "metric": "aoi",
}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; unknown keys are hard errors."""
    cfg: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_SCHEMA:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        caster = CONFIG_SCHEMA[key]
        try:
            cfg[key] = caster(value)
        except ValueError:
            raise UsageError(
                f"config line {lineno}: key {key!r} needs a {caster.__name__}, got {value!r}"
            ) from None
    return cfg


def format_config_text(cfg: dict) -> str:
    """Render a config mapping so that parsing it back is the identity."""
    lines = []
    for key in sorted(cfg):
        if key not in CONFIG_SCHEMA:
            raise UsageError(f"unknown configuration key {key!r}")
        value = cfg[key]
        rendered = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CliConfig:
    """Effective configuration after merging flags over a config file."""

    metric: str
    params: SystemParams
    query: QuerySpec
    source: SourceSpec
    risk: RiskSpec
    learning: LearningParams
    seed: int
    learn_steps: int
    test_steps: int
    runs: int
    threshold: int | None

    def env_spec(self) -> EnvSpec:
        return EnvSpec(
            metric=self.metric,
            params=self.params,
            risk=self.risk,
            query=self.query if self.metric == "qaoi" else None,
            source=self.source if self.metric == "aoii" else None,
        )

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            env=self.env_spec(),
            learning=self.learning,
            threshold=self.threshold,
            test_steps=self.test_steps,
            runs=self.runs,
            base_seed=self.seed,
        )


def resolve_config(args: argparse.Namespace) -> CliConfig:
    file_cfg: dict = {}
    if getattr(args, "config", None):
        file_cfg = parse_config_text(Path(args.config).read_text())

    def pick(key: str):
        dest = "lam" if key == "lambda" else key
        flag = getattr(args, dest, None)
        if flag is not None:
            return flag
        if key in file_cfg:
            return file_cfg[key]
        return _DEFAULTS[key]

    metric = pick("metric")
    if metric not in ("aoi", "qaoi", "aoii"):
        raise UsageError(f"metric must be aoi, qaoi or aoii, got {metric!r}")
    params = SystemParams(
        p=pick("p"), lam=pick("lambda"), nu=pick("nu"), alpha=pick("alpha"), beta=pick("beta")
    )
    risk = RiskSpec(zeta=pick("zeta"), zeta_aoii=pick("zeta_aoii"), rho=pick("rho"))
    learning = LearningParams(
        steps=pick("learn_steps"),
        gamma=pick("gamma"),
        epsilon0=pick("epsilon0"),
        delta=pick("delta"),
        epsilon_min=pick("epsilon_min"),
        rho=risk.rho,
        a_max=pick("a_max"),
        strict_query_cost=bool(getattr(args, "strict_query_cost", False)),
    )
    threshold = pick("threshold")
    theta = getattr(args, "theta", None)
    if theta is not None:
        if metric != "aoii":
            raise UsageError("--theta only applies to the aoii metric; use --threshold")
        threshold = theta
    return CliConfig(
        metric=metric,
        params=params,
        query=QuerySpec(q=pick("q")),
        source=SourceSpec(num_states=pick("num_states"), p_r=pick("p_r")),
        risk=risk,
        learning=learning,
        seed=pick("seed"),
        learn_steps=pick("learn_steps"),
        test_steps=pick("test_steps"),
        runs=pick("runs"),
        threshold=threshold,
    )


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def _common_flags() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    group = common.add_argument_group("model and run configuration")
    group.add_argument("--config", help="key = value configuration file")
    group.add_argument("--metric", choices=["aoi", "qaoi", "aoii"])
    group.add_argument("--p", type=float, help="channel success probability")
    group.add_argument("--lambda", dest="lam", type=float, help="arrival probability")
    group.add_argument("--nu", type=float, help="energy per attempt")
    group.add_argument("--alpha", type=float, help="age cost weight")
    group.add_argument("--beta", type=float, help="energy cost weight")
    group.add_argument("--q", type=float, help="query probability (qaoi)")
    group.add_argument("--p-r", dest="p_r", type=float, help="source stay probability (aoii)")
    group.add_argument("--num-states", dest="num_states", type=int, help="source alphabet size")
    group.add_argument("--zeta", type=int, help="risky age level (aoi/qaoi)")
    group.add_argument("--zeta-aoii", dest="zeta_aoii", type=int, help="risky mismatch level")
    group.add_argument("--rho", type=float, help="risky-cost multiplier for learning")
    group.add_argument("--gamma", type=float, help="discount factor")
    group.add_argument("--epsilon0", type=float, help="initial exploration rate")
    group.add_argument("--delta", type=float, help="exploration decay per step")
    group.add_argument("--epsilon-min", dest="epsilon_min", type=float, help="exploration floor")
    group.add_argument("--learn-steps", dest="learn_steps", type=int)
    group.add_argument("--test-steps", dest="test_steps", type=int)
    group.add_argument("--runs", type=int)
    group.add_argument("--a-max", dest="a_max", type=int, help="state clamp for learning")
    group.add_argument("--seed", type=int)
    group.add_argument("--threshold", type=int, help="send threshold n (or mismatch theta)")
    group.add_argument("--theta", type=int, help="mismatch send threshold (aoii alias)")
    group.add_argument(
        "--strict-query-cost",
        action="store_true",
        help="zero the whole step cost on non-query steps while learning (qaoi)",
    )
    return common


def build_parser() -> _Parser:
    keys = ", ".join(sorted(CONFIG_SCHEMA))
    parser = _Parser(
        prog="agelab",
        description="Risk-sensitive scheduling laboratory for age-based update metrics.",
        epilog="configuration file keys (flags of the same name override them):\n  " + keys,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = _common_flags()
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    analytic = sub.add_parser(
        "analytic", parents=[common], help="closed-form threshold evaluation"
    )
    analytic.add_argument("--k-max", dest="k_max", type=int, help="age table display bound")
    analytic.set_defaults(func=cmd_analytic)

    optimize = sub.add_parser(
        "optimize", parents=[common], help="find the cheapest threshold, optionally under a risk budget"
    )
    optimize.add_argument("--risk-budget", dest="risk_budget", type=float)
    optimize.add_argument("--n-max", dest="n_max", type=int, default=64)
    optimize.set_defaults(func=cmd_optimize)

    simulate = sub.add_parser(
        "simulate", parents=[common], help="seeded rollouts of a threshold policy"
    )
    simulate.add_argument("--out", help="write per-strategy CSV here")
    simulate.set_defaults(func=cmd_simulate)

    train_cmd = sub.add_parser(
        "train", parents=[common], help="one learning run, dumping the value table"
    )
    train_cmd.add_argument("--out", help="value table CSV path (default qtable_<metric>.csv)")
    train_cmd.set_defaults(func=cmd_train)

    reproduce = sub.add_parser(
        "reproduce", parents=[common], help="canned experiments writing CSV and plot data"
    )
    reproduce.add_argument("figure", help="one of " + ", ".join(sorted(FIGURES)))
    reproduce.add_argument("--out-dir", dest="out_dir", default=".")
    reproduce.set_defaults(func=cmd_reproduce)
    return parser


def cmd_analytic(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    if cfg.metric == "aoii":
        raise UsageError("no closed form for the mismatch metric; use simulate instead")
    if cfg.threshold is None:
        raise UsageError("analytic needs --threshold")
    q = cfg.query.q if cfg.metric == "qaoi" else None
    if cfg.risk.zeta <= cfg.threshold:
        raise AnalyticInapplicableError(
            f"risky frequency in closed form needs zeta > threshold "
            f"(zeta={cfg.risk.zeta}, threshold={cfg.threshold}); use simulate instead"
        )
    k_max = getattr(args, "k_max", None)
    result = evaluate_threshold(
        cfg.threshold, cfg.params, cfg.risk.zeta, q=q, k_max=k_max
    )
    breakdown = cost_breakdown(cfg.threshold, cfg.params, q=q)
    label = f"{cfg.metric} threshold {cfg.threshold}"
    if q is not None:
        label += f", q={q:g}"
    print(label)
    print(f"average cost        {result.cost!r}")
    print(f"  age part          {breakdown.age_cost!r}")
    print(f"  energy part       {breakdown.energy_cost!r}")
    print(f"period length       {result.period_length!r}")
    print(f"attempts per period {result.attempts!r}")
    print("age frequencies:")
    for k in sorted(result.freq):
        print(f"  {k:3d}  {result.freq[k]:.9f}")
    print(f"risky frequency (age >= {cfg.risk.zeta}): {result.risky_freq!r}")
    return 0


def cmd_optimize(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    if cfg.metric == "aoii":
        raise UsageError("no closed form for the mismatch metric; sweep with simulate instead")
    q = cfg.query.q if cfg.metric == "qaoi" else None
    budget = getattr(args, "risk_budget", None)
    n_max = getattr(args, "n_max", 64)
    if budget is None:
        best = optimal_threshold(cfg.metric, cfg.params, n_max=n_max, q=q)
        print(f"optimal threshold: {best}")
    else:
        best = risk_constrained_threshold(
            budget, cfg.risk.zeta, cfg.params, n_max=n_max, q=q
        )
        print(f"optimal threshold under risk budget {budget:g}: {best}")
    cost = (
        threshold_cost_qaoi(best, cfg.params, q)
        if q is not None
        else cost_breakdown(best, cfg.params).total
    )
    print(f"average cost     {cost!r}")
    try:
        risk = risky_frequency(best, cfg.risk.zeta, cfg.params, q=q)
        print(f"risky frequency  {risk!r}")
    except AnalyticInapplicableError:
        pass
    return 0


def _default_threshold(cfg: CliConfig) -> int:
    if cfg.threshold is not None:
        return cfg.threshold
    if cfg.metric == "aoi":
        return optimal_threshold("aoi", cfg.params)
    if cfg.metric == "qaoi":
        return optimal_threshold("qaoi", cfg.params, q=cfg.query.q)
    raise UsageError("simulate needs --threshold (or --theta) for the aoii metric")


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    threshold = _default_threshold(cfg)
    spec = cfg.env_spec()
    if cfg.metric == "aoii":
        from .strategy import AoiiThresholdPolicy

        policy = AoiiThresholdPolicy(threshold)
        param = f"theta={threshold}"
    else:
        from .strategy import ThresholdPolicy

        policy = ThresholdPolicy(threshold)
        param = f"n={threshold}"
    stats = evaluate(policy, spec, cfg.test_steps, cfg.runs, cfg.seed)
    row = ResultRow(
        experiment_id="simulate",
        metric=cfg.metric,
        strategy="threshold",
        param=param,
        learn_steps=None,
        test_steps=cfg.test_steps,
        runs=cfg.runs,
        mean_cost=stats.mean_cost,
        std_cost=stats.std_cost,
        mean_risky_freq=stats.mean_risky_freq,
        std_risky_freq=stats.std_risky_freq,
    )
    print(format_summary([row]))
    print(f"mean send rate {stats.mean_send_rate:.4f}")
    out = getattr(args, "out", None)
    if out:
        emit_results([row], out)
        print(f"wrote {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    spec = cfg.env_spec()
    env_seed, explore_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    params = replace(cfg.learning, steps=cfg.learn_steps)
    report = train(spec.build(env_seed), params, explore_seed)
    out = getattr(args, "out", None) or f"qtable_{cfg.metric}.csv"
    report.table.dump_csv(out)
    print(f"trained {cfg.metric} for {report.steps} steps (rho={params.rho:g})")
    print(f"final epsilon      {report.final_epsilon!r}")
    print(f"risky transitions  {report.risky_transitions}")
    print(f"table entries      {report.table.values.size}")
    print(f"wrote {out}")
    return 0


def _sweep_figure(figure: str, metric: str, values: list[int]):
    def run(args: argparse.Namespace, cfg: CliConfig, out_dir: Path) -> list[ResultRow]:
        config = cfg.experiment()
        sweep = threshold_sweep(metric, values, config)
        rows = sweep_rows(figure, metric, sweep, config)
        emit_results(rows, out_dir / f"{figure}.csv")
        emit_plot_data(
            out_dir / f"{figure}_cost.dat",
            [(p.value, p.stats.mean_cost, p.stats.std_cost) for p in sweep.points],
        )
        emit_plot_data(
            out_dir / f"{figure}_risky.dat",
            [(p.value, p.stats.mean_risky_freq, p.stats.std_risky_freq) for p in sweep.points],
        )
        analytic = [
            (p.value, p.analytic_cost, 0.0) for p in sweep.points if p.analytic_cost is not None
        ]
        if analytic:
            emit_plot_data(out_dir / f"{figure}_cost_analytic.dat", analytic)
        analytic_risky = [
            (p.value, p.analytic_risky, 0.0)
            for p in sweep.points
            if p.analytic_risky is not None
        ]
        if analytic_risky:
            emit_plot_data(out_dir / f"{figure}_risky_analytic.dat", analytic_risky)
        return rows

    return run


def _comparison_figure(figure: str, metric: str, steps_list: list[int]):
    def run(args: argparse.Namespace, cfg: CliConfig, out_dir: Path) -> list[ResultRow]:
        config = cfg.experiment()
        chosen = [cfg.learn_steps] if args.learn_steps is not None else steps_list
        rows: list[ResultRow] = []
        for steps in chosen:
            comparison = learning_comparison(metric, steps, config)
            block = comparison_rows(figure, comparison, config)
            rows.extend(block)
            triples = [
                (i, row.mean_risky_freq, row.std_risky_freq) for i, row in enumerate(block)
            ]
            emit_plot_data(out_dir / f"{figure}_risky_{steps}.dat", triples)
        emit_results(rows, out_dir / f"{figure}.csv")
        return rows

    return run


def _query_sweep_figure(figure: str, q_values: list[float]):
    def run(args: argparse.Namespace, cfg: CliConfig, out_dir: Path) -> list[ResultRow]:
        config = cfg.experiment()
        sweep = query_prob_sweep(q_values, config)
        rows: list[ResultRow] = []
        for point in sweep.points:
            for name, stats in sorted(point.comparison.items()):
                rows.append(
                    ResultRow(
                        experiment_id=figure,
                        metric="qaoi",
                        strategy=name,
                        param=f"q={point.q:g}",
                        learn_steps=point.comparison.learn_steps,
                        test_steps=config.test_steps,
                        runs=config.runs,
                        mean_cost=stats.mean_cost,
                        std_cost=stats.std_cost,
                        mean_risky_freq=stats.mean_risky_freq,
                        std_risky_freq=stats.std_risky_freq,
                    )
                )
        emit_results(rows, out_dir / f"{figure}.csv")
        for name in sorted(sweep.points[0].comparison):
            triples = [
                (point.q, point.comparison[name].mean_cost, point.comparison[name].std_cost)
                for point in sweep.points
            ]
            emit_plot_data(out_dir / f"{figure}_cost_{name}.dat", triples)
        emit_plot_data(
            out_dir / f"{figure}_cost_analytic.dat",
            [(point.q, point.analytic_cost, 0.0) for point in sweep.points],
        )
        return rows

    return run


FIGURES = {
    "fig3a": _sweep_figure("fig3a", "aoi", list(range(1, 9))),
    "fig3b": _sweep_figure("fig3b", "aoi", list(range(1, 9))),
    "fig3c": _sweep_figure("fig3c", "qaoi", list(range(1, 9))),
    "fig3d": _sweep_figure("fig3d", "aoii", list(range(0, 7))),
    "fig4": _comparison_figure("fig4", "aoi", [100_000]),
    "fig5": _comparison_figure("fig5", "aoi", [1_000_000]),
    "fig6": _comparison_figure("fig6", "qaoi", [100_000, 1_000_000]),
    "fig7": _query_sweep_figure("fig7", [0.2, 0.4, 0.6, 0.8, 1.0]),
    "fig8": _comparison_figure("fig8", "aoii", [100_000, 1_000_000]),
}


def cmd_reproduce(args: argparse.Namespace) -> int:
    if args.figure not in FIGURES:
        raise UsageError(
            f"unknown figure {args.figure!r}; choose from " + ", ".join(sorted(FIGURES))
        )
    cfg = resolve_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = FIGURES[args.figure](args, cfg, out_dir)
    print(format_summary(rows))
    print(f"wrote {out_dir / (args.figure + '.csv')}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if not hasattr(args, "func"):
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except InfeasibleRiskBudgetError as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return 2
    except (UsageError, AnalyticInapplicableError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
