"""
Coupled dynamics, neuronal embedding and trajectory distances

Every member of a coupling starts from the same weights. The mean-field limit
is stood in for by the particle dynamics at a much larger reference width whose
first neurons (two layers) or index-mapped entries (three layers) are the
finite network's initialization.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .analysis import fit_loglog
from .datagen import STREAM_EMBED, DataStream, counter_rng, init_2L, init_3L, make_pool, pool_risk
from .dynamics import simulate
from .errors import DimensionError, InsufficientGridError, SolverLimitError
from .models import DistanceReport, EmpiricalMeasure, Hyper, Params2L, Params3L, RateFit, SamplePool, Trajectory
from .transport import wasserstein2
from .utils import row_norms

logger = logging.getLogger(__name__)

MIN_REF_FACTOR = 4
PROXY_ELEMENT_LIMIT = 1 << 22
TRIANGLE_TOLERANCE = 1e-9

MEMBERS = ('proxy', 'pd', 'hb', 'shb')
# pairs in the decomposition D(proxy, shb) <= D(proxy, pd) + D(pd, hb) + D(hb, shb)
PAIRS = (('proxy', 'pd'), ('pd', 'hb'), ('hb', 'shb'), ('proxy', 'shb'))


def pair_name(a: str, b: str) -> str:
    return f"{a}-{b}"


def _check_grids(trajA: Trajectory, trajB: Trajectory):
    if len(trajA) != len(trajB) or not np.array_equal(trajA.times, trajB.times):
        raise ValueError("trajectories are not recorded on the same time grid")


def dist_2L(trajA: Trajectory, trajB: Trajectory) -> DistanceReport:
    """max_j sup_t ||theta_B(t, j) - theta_A(t, j)||_2 on the shared grid"""
    _check_grids(trajA, trajB)
    values = np.empty(len(trajA))
    where = []
    for i, (WA, WB) in enumerate(zip(trajA.snapshots, trajB.snapshots)):
        if WA.n != WB.n or WA.D != WB.D:
            raise DimensionError(f"widths differ: {WA.n} x {WA.D} vs {WB.n} x {WB.D}")
        norms = row_norms(WB.neurons() - WA.neurons())
        j = int(np.argmax(norms))
        values[i] = norms[j]
        where.append(j)
    t = int(np.argmax(values))
    return DistanceReport(metric='D_T', times=trajA.times.copy(), values=values, location=(float(trajA.times[t]), where[t]))


def identity_maps(W: Params3L) -> Tuple[np.ndarray, np.ndarray]:
    return np.arange(W.n1), np.arange(W.n2)


def dist_3L(trajA: Trajectory, trajB: Trajectory, maps: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> DistanceReport:
    """Largest layerwise distance with trajA read at (C1(j1), C2(j2))"""
    _check_grids(trajA, trajB)
    first = trajB.snapshots[0]
    C1, C2 = identity_maps(first) if maps is None else (np.asarray(maps[0]), np.asarray(maps[1]))
    ref = trajA.snapshots[0]
    if len(C1) != first.n1 or len(C2) != first.n2:
        raise DimensionError("index maps do not match the finite network widths")
    if C1.min() < 0 or C1.max() >= ref.n1 or C2.min() < 0 or C2.max() >= ref.n2:
        raise IndexError("index maps point outside the reference network")
    values = np.empty(len(trajA))
    where = []
    for i, (R, W) in enumerate(zip(trajA.snapshots, trajB.snapshots)):
        layers = (
            ('w1', row_norms(R.w1[C1] - W.w1)),
            ('w2', np.abs(R.w2[np.ix_(C1, C2)] - W.w2)),
            ('w3', np.abs(R.w3[C2] - W.w3)),
        )
        name, arr = max(layers, key=lambda layer: float(np.max(layer[1])))
        values[i] = float(np.max(arr))
        where.append((name, tuple(int(k) for k in np.unravel_index(int(np.argmax(arr)), arr.shape))))
    t = int(np.argmax(values))
    return DistanceReport(metric='D_T', times=trajA.times.copy(), values=values,
                          location=(float(trajA.times[t]),) + where[t])


def restrict_2L(traj: Trajectory, n: int) -> Trajectory:
    """First n neurons of every snapshot"""
    keep = np.arange(n)
    return Trajectory(times=traj.times, snapshots=[W.subset(keep) for W in traj.snapshots], label=traj.label)


@dataclass
class RefPool3L:
    """Reference network on the index space [N1_ref] x [N2_ref]"""
    params: Params3L

    @property
    def widths(self) -> Tuple[int, int]:
        return self.params.widths


def reference_pool_3L(spec, n1_ref: int, n2_ref: int, D: int, seed: int) -> RefPool3L:
    if n1_ref * n2_ref > PROXY_ELEMENT_LIMIT:
        raise SolverLimitError(f"reference pool {n1_ref} x {n2_ref} exceeds {PROXY_ELEMENT_LIMIT} entries")
    return RefPool3L(init_3L(spec, n1_ref, n2_ref, D, seed))


def embed_with_maps(ref: RefPool3L, C1: Sequence[int], C2: Sequence[int]) -> Params3L:
    """w1(j1) = w1_ref(C1(j1)), w2(j1, j2) = w2_ref(C1(j1), C2(j2)), w3(j2) = w3_ref(C2(j2))"""
    R = ref.params
    C1 = np.asarray(C1, dtype=np.intp)
    C2 = np.asarray(C2, dtype=np.intp)
    return Params3L(R.w1[C1].copy(), R.w2[np.ix_(C1, C2)].copy(), R.w3[C2].copy())


def embed_3L(ref: RefPool3L, n1: int, n2: int, seed: int) -> Tuple[Params3L, Tuple[np.ndarray, np.ndarray]]:
    """Sample a finite network from the reference, indices drawn with replacement"""
    N1, N2 = ref.widths
    if N1 == 0 or N2 == 0:
        raise ValueError("reference pool is empty")
    if n1 < 1 or n2 < 1:
        raise ValueError(f"widths must be positive, got n1={n1}, n2={n2}")
    rng = counter_rng(seed, STREAM_EMBED, 0)
    C1 = rng.integers(0, N1, size=n1)
    C2 = rng.integers(0, N2, size=n2)
    return embed_with_maps(ref, C1, C2), (C1, C2)


def mf_proxy(n_ref: int, W_ref, pool: SamplePool, h: Hyper, net, substeps: int = 16,
             max_width: Optional[int] = None) -> Trajectory:
    """Particle dynamics at the reference width, the stand-in for the mean-field limit"""
    size = W_ref.w1.size if isinstance(W_ref, Params2L) else W_ref.w2.size
    if size > PROXY_ELEMENT_LIMIT:
        raise SolverLimitError(f"proxy with {size} weights exceeds the limit of {PROXY_ELEMENT_LIMIT}")
    if max_width is not None and n_ref < MIN_REF_FACTOR * max_width:
        raise ValueError(f"n_ref={n_ref} must be at least {MIN_REF_FACTOR} x the largest width {max_width}")
    traj = simulate('pd', W_ref, net, h, pool=pool, pd_substeps=substeps)
    return Trajectory(times=traj.times, snapshots=traj.snapshots, label='proxy')


@dataclass
class Coupling2L:
    """Shared initialization, stream and pool for the two-layer dynamics"""
    init: Params2L
    stream: DataStream
    pool: SamplePool
    h: Hyper
    net: object
    pd_substeps: int = 16
    trajectories: Dict[str, Trajectory] = field(default_factory=dict)

    def run(self, dynamics: str) -> Trajectory:
        traj = simulate(dynamics, self.init, self.net, self.h, stream=self.stream, pool=self.pool,
                        pd_substeps=self.pd_substeps)
        self.trajectories[dynamics] = traj
        return traj

    def attach_proxy(self, proxy: Trajectory):
        self.trajectories['proxy'] = restrict_2L(proxy, self.init.n)

    def distance(self, a: str, b: str) -> DistanceReport:
        return dist_2L(self.trajectories[a], self.trajectories[b])


@dataclass
class Coupling3L:
    """Finite three-layer network embedded in a reference pool"""
    ref: RefPool3L
    init: Params3L
    maps: Tuple[np.ndarray, np.ndarray]
    stream: DataStream
    pool: SamplePool
    h: Hyper
    net: object
    pd_substeps: int = 16
    trajectories: Dict[str, Trajectory] = field(default_factory=dict)

    def run(self, dynamics: str) -> Trajectory:
        traj = simulate(dynamics, self.init, self.net, self.h, stream=self.stream, pool=self.pool,
                        pd_substeps=self.pd_substeps)
        self.trajectories[dynamics] = traj
        return traj

    def attach_proxy(self, proxy: Trajectory):
        self.trajectories['proxy'] = proxy

    def distance(self, a: str, b: str) -> DistanceReport:
        # only the proxy lives on the reference index space
        maps = self.maps if a == 'proxy' else None
        return dist_3L(self.trajectories[a], self.trajectories[b], maps)


def couple_2L(n: int, init_spec, data_spec, seed: int, h: Hyper, net, pool: Optional[SamplePool] = None,
              pool_size: int = 4096, batch_size: int = 1, pd_substeps: int = 16) -> Coupling2L:
    if n < 1:
        raise ValueError(f"width must be >= 1, got {n}")
    return Coupling2L(
        init=init_2L(init_spec, n, data_spec.dim, seed),
        stream=DataStream(data_spec, seed, batch_size),
        pool=pool if pool is not None else make_pool(data_spec, pool_size, seed),
        h=h, net=net, pd_substeps=pd_substeps,
    )


def couple_3L(ref: RefPool3L, n1: int, n2: int, data_spec, seed: int, h: Hyper, net,
              pool: Optional[SamplePool] = None, pool_size: int = 4096, batch_size: int = 1,
              pd_substeps: int = 16) -> Coupling3L:
    init, maps = embed_3L(ref, n1, n2, seed)
    return Coupling3L(
        ref=ref, init=init, maps=maps,
        stream=DataStream(data_spec, seed, batch_size),
        pool=pool if pool is not None else make_pool(data_spec, pool_size, seed),
        h=h, net=net, pd_substeps=pd_substeps,
    )


@dataclass
class CoupledResult:
    """Distances and endpoint statistics of one coupled run"""
    width: int
    eps: float
    seed: int
    distances: Dict[str, DistanceReport] = field(default_factory=dict)
    final_risks: Dict[str, float] = field(default_factory=dict)
    w2: Optional[float] = None
    w2_approximate: bool = False
    triangle_slack: Optional[float] = None

    @property
    def triangle_ok(self) -> bool:
        return self.triangle_slack is None or self.triangle_slack >= -TRIANGLE_TOLERANCE


def reference_width(cfg, widths: Iterable[int]) -> int:
    return cfg.coupling.n_ref or cfg.coupling.ref_factor * max(widths)


def coupled_runs(cfg, eps: float, seed: int, widths: Sequence[int]) -> List[CoupledResult]:
    """All widths for one (eps, seed); the proxy is integrated once and shared"""
    h = replace(cfg.hyper, eps=eps, seed=seed)
    net = cfg.network.build(cfg.model)
    members = [m for m in MEMBERS if m in cfg.coupling.dynamics]
    pool = make_pool(cfg.data, cfg.training.pool_size, seed)
    n_ref = reference_width(cfg, widths)
    D = cfg.data.dim

    if cfg.model == '2l':
        W_ref = init_2L(cfg.init, n_ref, D, seed)
    else:
        ref = reference_pool_3L(cfg.init, n_ref, n_ref, D, seed)
        W_ref = ref.params
    proxy = None
    if 'proxy' in members:
        proxy = mf_proxy(n_ref, W_ref, pool, h, net, substeps=cfg.coupling.proxy_substeps, max_width=max(widths))
        logger.debug("proxy n_ref=%d eps=%g seed=%d integrated", n_ref, eps, seed)

    results = []
    for n in sorted(widths):
        if cfg.model == '2l':
            coupling = couple_2L(n, cfg.init, cfg.data, seed, h, net, pool=pool,
                                 batch_size=cfg.training.batch_size, pd_substeps=cfg.training.pd_substeps)
        else:
            coupling = couple_3L(ref, n, n, cfg.data, seed, h, net, pool=pool,
                                 batch_size=cfg.training.batch_size, pd_substeps=cfg.training.pd_substeps)
        if proxy is not None:
            coupling.attach_proxy(proxy)
        for member in members:
            if member != 'proxy':
                coupling.run(member)
        results.append(summarize_coupling(coupling, n, eps, seed, cfg.coupling.wasserstein))
    return results


def summarize_coupling(coupling, width: int, eps: float, seed: int, wasserstein: bool = True) -> CoupledResult:
    result = CoupledResult(width=width, eps=eps, seed=seed)
    present = coupling.trajectories
    for a, b in PAIRS:
        if a in present and b in present:
            result.distances[pair_name(a, b)] = coupling.distance(a, b)
    for name, traj in present.items():
        if name != 'proxy':
            result.final_risks[name] = pool_risk(traj.final, coupling.pool, coupling.net)
    if all(pair_name(a, b) in result.distances for a, b in PAIRS):
        d = {k: v.sup for k, v in result.distances.items()}
        result.triangle_slack = d['proxy-pd'] + d['pd-hb'] + d['hb-shb'] - d['proxy-shb']
    if wasserstein and isinstance(coupling, Coupling2L) and 'pd' in present and 'shb' in present:
        result.w2, result.w2_approximate = wasserstein2(
            EmpiricalMeasure.of_neurons(present['pd'].final), EmpiricalMeasure.of_neurons(present['shb'].final))
    return result


def _coupled_job(args):
    return coupled_runs(*args)


@dataclass
class RateTable:
    """Medians over seeds, log-log fits and halving ratios"""
    medians: List[dict] = field(default_factory=list)
    fits: Dict[str, RateFit] = field(default_factory=dict)
    ratios: List[dict] = field(default_factory=list)
    results: List[CoupledResult] = field(default_factory=list)

    def median(self, metric: str, width: int, eps: float) -> float:
        for row in self.medians:
            if row['metric'] == metric and row['width'] == width and row['eps'] == eps:
                return row['median']
        raise KeyError((metric, width, eps))

    @property
    def triangle_ok(self) -> bool:
        return all(r.triangle_ok for r in self.results)


def rate_table(results: List[CoupledResult], widths: Sequence[int], eps_list: Sequence[float]) -> RateTable:
    table = RateTable(results=list(results))
    widths = sorted(set(widths))
    eps_list = sorted(set(eps_list), reverse=True)
    metrics = sorted({m for r in results for m in r.distances})
    for metric in metrics:
        for n in widths:
            for eps in eps_list:
                values = [r.distances[metric].sup for r in results
                          if r.width == n and r.eps == eps and metric in r.distances]
                if values:
                    table.medians.append({'metric': metric, 'width': n, 'eps': eps,
                                          'median': float(np.median(values)), 'count': len(values)})

    if len(widths) < 3 or len(eps_list) < 2:
        logger.warning("chaos grid has %d widths and %d step sizes; fits need at least 3 and 2",
                       len(widths), len(eps_list))
    for metric in metrics:
        for eps in eps_list:
            if len(widths) >= 3:
                ys = [table.median(metric, n, eps) for n in widths]
                if min(ys) > 0:
                    table.fits[f"{metric}:width@eps={eps!r}"] = fit_loglog(widths, ys)
            for small, large in zip(widths, widths[1:]):
                table.ratios.append(_ratio(table, metric, 'width', (small, eps), (large, eps)))
        for n in widths:
            if len(eps_list) >= 3:
                ys = [table.median(metric, n, eps) for eps in eps_list]
                if min(ys) > 0:
                    table.fits[f"{metric}:eps@width={n}"] = fit_loglog(eps_list, ys)
            for big, small in zip(eps_list, eps_list[1:]):
                table.ratios.append(_ratio(table, metric, 'eps', (n, big), (n, small)))
    return table


def _ratio(table: RateTable, metric: str, axis: str, num: Tuple[int, float], den: Tuple[int, float]) -> dict:
    a = table.median(metric, *num)
    b = table.median(metric, *den)
    return {'metric': metric, 'axis': axis, 'from': num, 'to': den,
            'ratio': a / b if b > 0 else None}


def chaos_experiment(widths: Sequence[int], eps_list: Sequence[float], seeds: Sequence[int], cfg,
                     runner: Callable = map,
                     on_result: Optional[Callable[[List[CoupledResult]], None]] = None) -> RateTable:
    """Coupled runs over the (width, eps, seed) grid, reduced to a rate table.

    `runner` maps the job function over job arguments in order; a process
    pool's imap keeps the merge deterministic. `on_result` sees each job's
    results as they arrive.
    """
    if not widths or not eps_list or not seeds:
        raise InsufficientGridError("chaos experiment needs at least one width, step size and seed")
    widths = tuple(sorted(set(widths)))
    jobs = [(cfg, eps, seed, widths) for eps in sorted(set(eps_list), reverse=True) for seed in seeds]
    results = []
    for batch in runner(_coupled_job, jobs):
        if on_result is not None:
            on_result(batch)
        results.extend(batch)
    return rate_table(results, widths, eps_list)
