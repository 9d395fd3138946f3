"""Engine configuration: one dataclass per pipeline stage, loadable from INI."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields

DEFAULT_EXCLUDED_GICS = ("4010", "4020", "4030", "4040", "5510")


@dataclass(frozen=True)
class PanelConfig:
    lag_days: int = 180
    min_history_years: int = 8
    min_price_months: int = 12
    excluded_gics: tuple = DEFAULT_EXCLUDED_GICS
    breakpoint_percentile: int = 40
    # annual statements count as consecutive when period ends are this many
    # months apart; monthly quotes when at most this many days apart
    annual_gap_months: tuple = (10, 14)
    price_gap_days: int = 35


@dataclass(frozen=True)
class BacktestConfig:
    management_fee_annual: float = 0.015
    transaction_cost: float = 0.01
    rebalance_month: int = 6
    min_train_examples: int = 1000
    initial_value: float = 1.0


@dataclass(frozen=True)
class LearnerConfig:
    n_trees: int = 21
    tree_min_node: int = 20
    tree_min_improvement: float = 0.01
    tree_max_depth: int = 30


@dataclass(frozen=True)
class FeatureConfig:
    hurdle_rate: float = 0.20          # target CAGR for the price-target screen
    winsorize_low: float = 0.10
    winsorize_high: float = 0.90
    daily_window: int = 63
    daily_window_max_span_days: int = 108
    pfd_lag_months: int = 12


@dataclass(frozen=True)
class EngineConfig:
    panel: PanelConfig = field(default_factory=PanelConfig)
    backtest: BacktestConfig = field(default_factory=BacktestConfig)
    learners: LearnerConfig = field(default_factory=LearnerConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)

    @classmethod
    def load(cls, path) -> "EngineConfig":
        """Read an INI config file; absent sections or keys keep defaults."""
        parser = configparser.ConfigParser()
        with open(path) as f:
            parser.read_file(f)
        sections = {}
        for section_name, section_cls in (
            ("panel", PanelConfig),
            ("backtest", BacktestConfig),
            ("learners", LearnerConfig),
            ("features", FeatureConfig),
        ):
            kwargs = {}
            if parser.has_section(section_name):
                raw = parser[section_name]
                for f_ in fields(section_cls):
                    if f_.name not in raw:
                        continue
                    text = raw[f_.name]
                    if f_.name == "excluded_gics":
                        kwargs[f_.name] = tuple(s.strip() for s in text.split(",") if s.strip())
                    elif f_.name == "annual_gap_months":
                        lo, hi = (int(s) for s in text.split(","))
                        kwargs[f_.name] = (lo, hi)
                    elif f_.type == "int":
                        kwargs[f_.name] = int(text)
                    else:
                        kwargs[f_.name] = float(text)
            sections[section_name] = section_cls(**kwargs)
        return cls(
            panel=sections["panel"],
            backtest=sections["backtest"],
            learners=sections["learners"],
            features=sections["features"],
        )


DEFAULT_CONFIG = EngineConfig()
