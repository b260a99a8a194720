# Copyright 2023 the thermoreflect authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Compare analytic gradients against central finite differences."""
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import torch
from absl import logging

from thermoreflect.exceptions import GradcheckError
from thermoreflect.geometry_ops import as_tensor
from thermoreflect.params import ParamVector
from thermoreflect.util.py.executor import ExecutorLike, execute
from thermoreflect.util.py.progress import Profile

LossFunction = Callable[[ParamVector], torch.Tensor]


@dataclass(frozen=True)
class GradReport:
    """Analytic and finite-difference gradients with their disagreement.

    Errors are normalized by max(‖numeric‖, 1e-12): per coordinate as
    |analytic_i - numeric_i| over that norm, and overall as
    ‖analytic - numeric‖ over that norm.
    """

    names: Tuple[str, ...]
    analytic: np.ndarray
    numeric: np.ndarray
    coordinate_error: np.ndarray
    relative_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.relative_error <= self.tolerance

    @property
    def failing(self) -> List[str]:
        return [n for n, e in zip(self.names, self.coordinate_error) if e > self.tolerance]

    def to_table(self) -> str:
        width = max([len("coordinate")] + [len(n) for n in self.names])
        lines = [
            f"{'coordinate':<{width}}  {'analytic':>14}  {'numeric':>14}  {'error':>10}  status"
        ]
        for name, a, f, e in zip(self.names, self.analytic, self.numeric, self.coordinate_error):
            status = "FAIL" if e > self.tolerance else "ok"
            lines.append(f"{name:<{width}}  {a:>14.6e}  {f:>14.6e}  {e:>10.3e}  {status}")
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(
            f"relative error {self.relative_error:.3e} (tolerance {self.tolerance:.1e}): {verdict}"
        )
        return "\n".join(lines)


def _as_params(at: Union[ParamVector, torch.Tensor, np.ndarray]) -> ParamVector:
    if isinstance(at, ParamVector):
        return at
    values = as_tensor(at).reshape(-1)
    return ParamVector([("x", len(values))], values)


def gradcheck(
    loss: LossFunction,
    at: Union[ParamVector, torch.Tensor, np.ndarray],
    h: float = 1e-5,
    tol: float = 1e-4,
    executor: Optional[ExecutorLike] = None,
) -> GradReport:
    """Check the gradient of a loss by central finite differences.

    :param loss: A scalar-valued differentiable function of a parameter vector.
    :param at: The point to check at. A bare tensor is wrapped into a single
        segment named "x".
    :param h: The finite-difference step.
    :param tol: The relative error tolerance.
    :param executor: An optional executor over which the 2·n shifted evaluations are
        distributed.
    :return: The report.
    :raises GradcheckError: If the loss is not finite at the point or at any
        shifted point. The message names the coordinate.
    """
    params = _as_params(at)
    if not h > 0:
        raise GradcheckError(f"Step must be positive, got {h}")

    x = params.values.detach().clone().requires_grad_(True)
    value = loss(params.with_values(x))
    if not bool(torch.isfinite(value.detach())):
        raise GradcheckError(f"Loss is not finite at the check point: {float(value)}")
    grad = None
    if value.requires_grad:
        (grad,) = torch.autograd.grad(value, x, allow_unused=True)
    analytic = np.zeros(len(params)) if grad is None else grad.detach().numpy().copy()

    base = params.values.detach()

    def _run_one(job: Tuple[int, float]) -> float:
        index, sign = job
        shifted = base.clone()
        shifted[index] += sign * h
        with torch.no_grad():
            result = float(loss(params.with_values(shifted)))
        if not np.isfinite(result):
            raise GradcheckError(
                f"Loss is not finite at {params.coordinate_name(index)} "
                f"{'+' if sign > 0 else '-'} {h:g}: {result}"
            )
        return result

    jobs = [(i, s) for i in range(len(params)) for s in (1.0, -1.0)]
    with Profile(f"Finite differences over {len(params)} coordinates", print_to=logging.debug):
        losses = np.array(list(execute(_run_one, jobs, executor)))
    numeric = (losses[0::2] - losses[1::2]) / (2 * h)

    scale = max(float(np.linalg.norm(numeric)), 1e-12)
    coordinate_error = np.abs(analytic - numeric) / scale
    relative_error = float(np.linalg.norm(analytic - numeric)) / scale
    names = tuple(params.coordinate_name(i) for i in range(len(params)))
    report = GradReport(names, analytic, numeric, coordinate_error, relative_error, tol)
    if not report.passed:
        logging.warning(
            "Gradient check failed with relative error %.3e, worst coordinate %s",
            relative_error,
            names[int(np.argmax(coordinate_error))],
        )
    return report
