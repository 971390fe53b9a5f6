"""Synthetic hierarchical promotional-demand panels with known proportions.

Each middle node runs its own promotion calendar; promotions cut price,
lift the middle node's demand, and shift how that demand splits over the
children.  Children sales are proportions times the middle series, so every
panel is coherent by construction and the true weekly proportions are
available as an oracle for the disaggregation models.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from htsdyn.hierarchy import HierarchySpec, SeriesPanel, build_hierarchy, panel_from_bottom

PROPORTION_FLOOR = 0.01


@dataclass(frozen=True)
class SimConfig:
    """Generator knobs.  Defaults mimic a weekly FMCG panel: one
    manufacturer, two retailers, six distribution centers each, 120 weeks.

    ``proportion_drift`` is the target mean absolute difference between
    promo-week and regular-week children proportions; it is attained exactly
    whenever the shifted proportions stay inside [PROPORTION_FLOOR, 1].
    """

    middle_nodes: int = 2
    children_per_middle: int = 6
    n_weeks: int = 120
    base_demand: float = 200.0
    promo_probability: float = 0.25
    promo_price_discount: float = 0.25
    promo_uplift_mean: float = 0.7
    promo_uplift_sigma: float = 0.15
    proportion_drift: float = 0.2
    noise_sigma: float = 0.15
    seed: int = 0

    def validate(self) -> None:
        if self.middle_nodes < 1:
            raise ValueError("need at least one middle node")
        if self.children_per_middle < 2:
            raise ValueError("need at least two children per middle node")
        if self.n_weeks < 30:
            raise ValueError("n_weeks must be at least 30")
        if self.base_demand <= 0:
            raise ValueError("base_demand must be positive")
        if not 0.0 <= self.promo_probability <= 1.0:
            raise ValueError("promo_probability must be in [0, 1]")
        if not 0.0 < self.promo_price_discount < 1.0:
            raise ValueError("promo_price_discount must be in (0, 1)")
        if self.proportion_drift < 0 or self.noise_sigma < 0:
            raise ValueError("drift and noise scales must be non-negative")


@dataclass(frozen=True)
class SimOutput:
    """A generated panel plus the ground truth behind it."""

    hier: HierarchySpec
    panel: SeriesPanel
    true_proportions: dict[str, np.ndarray]   # middle id -> weeks x children
    promo_calendar: np.ndarray                 # middles x weeks, bool
    base_proportions: dict[str, np.ndarray]
    promo_proportions: dict[str, np.ndarray]


def fig1_edges(middle_nodes: int, children_per_middle: int) -> list[tuple[str, str]]:
    """Edge list for the default 1-top / retailers / DCs tree."""
    wm = len(str(middle_nodes))
    wc = len(str(children_per_middle))
    edges = []
    for i in range(middle_nodes):
        mid = f"R{i + 1:0{wm}d}"
        edges.append(("TOTAL", mid))
        for j in range(children_per_middle):
            edges.append((mid, f"{mid}_D{j + 1:0{wc}d}"))
    return edges


def _shift_pattern(c: int) -> np.ndarray:
    """Zero-sum pattern with mean absolute value 1 (promo share reshuffle)."""
    u = np.zeros(c)
    half = c // 2
    u[:half] = 1.0
    u[c - half :] = -1.0
    if half:
        u *= c / (2.0 * half)
    return u


def _group_proportions(c: int, drift: float, rng: np.random.Generator):
    """Base and promo-week children proportions for one middle node.

    The promo composition moves mass from high-share children to low-share
    ones by ``drift`` on average; a floor keeps every share positive and
    renormalization restores the sum when the floor bites.
    """
    base = rng.dirichlet(np.full(c, 8.0))
    order = np.argsort(base)  # smallest shares gain during promos
    u = np.empty(c)
    u[order] = _shift_pattern(c)
    promo = base + drift * u
    promo = np.clip(promo, PROPORTION_FLOOR, 1.0)
    promo = promo / promo.sum()
    return base, promo


def simulate(config: SimConfig) -> SimOutput:
    """Generate one coherent panel with its promo calendar and true splits."""
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0x51A1)))
    hier = build_hierarchy(fig1_edges(config.middle_nodes, config.children_per_middle))
    mids = hier.nodes_at_level(1)
    c = config.children_per_middle
    n = config.n_weeks

    bottom_ids = hier.bottom_ids
    m_k = len(bottom_ids)
    bottom_sales = np.zeros((m_k, n))
    bottom_price = np.zeros((m_k, n))
    promo_cal = np.zeros((len(mids), n), dtype=bool)
    true_props: dict[str, np.ndarray] = {}
    base_props: dict[str, np.ndarray] = {}
    promo_props: dict[str, np.ndarray] = {}

    for mi, mid in enumerate(mids):
        kids = hier.children_of(mid)
        base_p, promo_p = _group_proportions(c, config.proportion_drift, rng)
        promo = rng.random(n) < config.promo_probability
        uplift = np.exp(
            rng.normal(config.promo_uplift_mean, config.promo_uplift_sigma, size=n)
        )
        noise = (
            np.exp(rng.normal(0.0, config.noise_sigma, size=n) - config.noise_sigma**2 / 2)
            if config.noise_sigma > 0
            else np.ones(n)
        )
        middle_sales = config.base_demand * c * np.where(promo, uplift, 1.0) * noise
        props = np.where(promo[:, None], promo_p[None, :], base_p[None, :])
        list_price = 10.0 * np.exp(rng.normal(0.0, 0.08, size=c))
        for ci, child in enumerate(kids):
            row = bottom_ids.index(child)
            bottom_sales[row] = props[:, ci] * middle_sales
            bottom_price[row] = list_price[ci] * np.where(
                promo, 1.0 - config.promo_price_discount, 1.0
            )
        promo_cal[mi] = promo
        true_props[mid] = props
        base_props[mid] = base_p
        promo_props[mid] = promo_p

    panel = panel_from_bottom(hier, bottom_sales, bottom_price)
    return SimOutput(
        hier=hier,
        panel=panel,
        true_proportions=true_props,
        promo_calendar=promo_cal,
        base_proportions=base_props,
        promo_proportions=promo_props,
    )


def derive_group_config(template: SimConfig, seed: int, group_index: int) -> SimConfig:
    """Per-group config: deterministic seed plus jittered demand and uplift."""
    ss = np.random.SeedSequence((seed, 0xB47C, group_index))
    rng = np.random.default_rng(ss)
    group_seed = int(ss.generate_state(1)[0])
    return replace(
        template,
        seed=group_seed,
        base_demand=template.base_demand * float(np.exp(rng.normal(0.0, 0.3))),
        promo_uplift_mean=template.promo_uplift_mean * float(rng.uniform(0.7, 1.3)),
    )


def simulate_batch(template: SimConfig, n_groups: int, seed: int) -> list[SimOutput]:
    """Independent panels for ``n_groups`` groups, reproducible from ``seed``."""
    if n_groups < 1:
        raise ValueError("n_groups must be >= 1")
    return [
        simulate(derive_group_config(template, seed, g)) for g in range(n_groups)
    ]


def save_truth_csv(out: SimOutput, path) -> None:
    """Ground truth: week, middle_node, child, true_proportion, promo_flag."""
    mids = out.hier.nodes_at_level(1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["week", "middle_node", "child", "true_proportion", "promo_flag"])
        for mi, mid in enumerate(mids):
            kids = out.hier.children_of(mid)
            props = out.true_proportions[mid]
            for t, week in enumerate(out.panel.times):
                for ci, child in enumerate(kids):
                    writer.writerow(
                        [
                            int(week),
                            mid,
                            child,
                            repr(float(props[t, ci])),
                            int(out.promo_calendar[mi, t]),
                        ]
                    )
