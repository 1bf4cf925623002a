"""
Runtime checks of the modelling assumptions behind an experiment
"""

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List

import numpy as np

from .config import DEFAULTS
from .datagen import make_pool
from .models import DataSpec, InitSpec, Params2L, SHBState
from .network import ACTIVATION_SUPREMA, Activation, Loss
from .utils import deep_merge

logger = logging.getLogger(__name__)

SCAN_SLACK = 1e-12
DATA_PROBE_DRAWS = 256


@dataclass
class AssumptionResult:
    name: str
    passed: bool
    message: str


@dataclass
class AssumptionReport:
    results: List[AssumptionResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> List[AssumptionResult]:
        return [r for r in self.results if not r.passed]

    def print_report(self):
        print("\n🔬 Assumption Checks")
        print("=" * 80)
        for r in self.results:
            icon = "✅" if r.passed else "❌"
            print(f"{icon} {r.name}: {r.message}")
        print("=" * 80)
        failed = len(self.failures())
        if failed:
            print(f"\n⚠️  {failed} of {len(self.results)} checks failed")
        else:
            print(f"\n✅ All {len(self.results)} checks passed")


class AssumptionChecker:
    """Evaluates each assumption on a raw (merged, possibly invalid) config dict"""

    def __init__(self, config: Dict[str, Any]):
        merged = copy.deepcopy(DEFAULTS)
        deep_merge(merged, copy.deepcopy(config))
        self.config = merged

    def run(self) -> AssumptionReport:
        report = AssumptionReport()
        checks: List[Callable[[], AssumptionResult]] = [
            self.check_momentum,
            self.check_rest_start,
            self.check_activation,
            self.check_loss,
            self.check_data,
            self.check_init,
        ]
        for check in checks:
            try:
                report.results.append(check())
            except (ValueError, TypeError, KeyError, AttributeError) as e:
                name = check.__name__.replace('check_', '')
                report.results.append(AssumptionResult(name, False, f"could not evaluate ({e})"))
            logger.debug("%s: %s", report.results[-1].name, "pass" if report.results[-1].passed else "fail")
        return report

    def check_momentum(self) -> AssumptionResult:
        hyper = self.config['hyper']
        gamma = float(hyper['gamma'])
        steps = [float(hyper['eps'])]
        if self.config.get('experiment') == 'chaos':
            steps += [float(e) for e in self.config['chaos']['eps_list']]
        bad = [e for e in steps if not (gamma > 0 and e > 0 and gamma * e < 1)]
        if bad:
            return AssumptionResult('momentum', False,
                                    f"gamma * eps must lie in (0, 1); gamma={gamma:g}, eps={bad[0]:g} gives {gamma * bad[0]:g}")
        worst = max(steps)
        return AssumptionResult('momentum', True, f"gamma * eps = {gamma * worst:g} < 1, beta = {1 - gamma * worst:g}")

    def check_rest_start(self) -> AssumptionResult:
        W = Params2L(np.ones((2, 3)), np.ones(2))
        eps = float(self.config['hyper']['eps'])
        r0 = SHBState.initial(W).momentum(eps)
        zero = all(not np.any(t) for t in r0.tensors())
        return AssumptionResult('initial momentum', zero,
                                "r(0) = 0 (previous iterate equals the initialization)" if zero
                                else "initial momentum is not zero")

    def _activations(self) -> List[Activation]:
        net = self.config['network']
        kinds = [net['activation']]
        if self.config['model'] == '3l':
            kinds.append(net['activation2'] or net['activation'])
        return [Activation(k) for k in kinds]

    def check_activation(self) -> AssumptionResult:
        messages = []
        for act in self._activations():
            scanned = act.sup_norms()
            exact = ACTIVATION_SUPREMA[act.kind]
            if not all(math.isfinite(s) and s <= e + SCAN_SLACK for s, e in zip(scanned, exact)):
                return AssumptionResult('activation', False, f"{act.kind}: scanned suprema {scanned} exceed {exact}")
            messages.append(f"{act.kind} |s|,|s'|,|s''| <= {exact[0]:g}, {exact[1]:.4g}, {exact[2]:.4g}")
        return AssumptionResult('activation', True, "; ".join(messages))

    def check_loss(self) -> AssumptionResult:
        net = self.config['network']
        kind = net['loss']
        if kind == 'square':
            allowed = net.get('unsafe_assumptions') is True
            note = " (allowed by unsafe_assumptions)" if allowed else ""
            return AssumptionResult('loss', False, f"square loss has an unbounded derivative{note}")
        loss = Loss(kind, delta=float(net['huber_delta']))
        y_max = float(self.config['data']['label_clip'])
        init = self.config['init']
        k_out = init['k_init'] if self.config['model'] == '2l' or init['k_init3'] is None else init['k_init3']
        yhat_max = max(1.0, 10.0 * float(k_out))
        bound = loss.derivative_bound(y_max, yhat_max)
        lipschitz = loss.lipschitz_estimate(y_max, yhat_max)
        if not (math.isfinite(bound) and math.isfinite(lipschitz)):
            return AssumptionResult('loss', False, f"{kind}: derivative scan is not finite")
        return AssumptionResult('loss', True, f"{kind}: |dR| <= {bound:.4g}, Lipschitz estimate {lipschitz:.4g}")

    def check_data(self) -> AssumptionResult:
        spec = DataSpec(**self.config['data'])
        if spec.K_x < 0 or not spec.K_y > 0:
            return AssumptionResult('data bounds', False, f"radius {spec.K_x:g} and label clip {spec.K_y:g} must be >= 0 and > 0")
        pool = make_pool(spec, DATA_PROBE_DRAWS, 0)
        max_x = float(np.max(np.linalg.norm(pool.X, axis=1)))
        max_y = float(np.max(np.abs(pool.Y)))
        ok = max_x <= spec.K_x and max_y <= spec.K_y
        return AssumptionResult('data bounds', ok,
                                f"max |x| = {max_x:.6g} <= {spec.K_x:.6g}, max |y| = {max_y:.6g} <= {spec.K_y:.6g}" if ok
                                else f"samples exceed the bounds (|x| {max_x:g}, |y| {max_y:g})")

    def check_init(self) -> AssumptionResult:
        spec = InitSpec(**self.config['init'])
        if spec.k_init < 0 or spec.k_out < 0:
            return AssumptionResult('initialization', False, "output-weight bounds must be >= 0")
        if spec.w1_std is not None and not spec.w1_std > 0:
            return AssumptionResult('initialization', False, "w1_std must be > 0")
        if self.config['model'] == '3l':
            if spec.law != 'product':
                return AssumptionResult('initialization', False,
                                        "three-layer initialization must be a product law across layers")
            return AssumptionResult('initialization', True,
                                    f"product law, |w2| <= {spec.k_init:g}, |w3| <= {spec.k_out:g}")
        return AssumptionResult('initialization', True, f"{spec.law} law, |w2| <= {spec.k_init:g}")


def check_assumptions(config: Dict[str, Any]) -> AssumptionReport:
    return AssumptionChecker(config).run()
