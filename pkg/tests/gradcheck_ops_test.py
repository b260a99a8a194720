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
"""Unit tests for //thermoreflect:gradcheck_ops."""
import numpy as np
import pytest
import torch

from tests.test_main import main
from thermoreflect.exceptions import GradcheckError
from thermoreflect.geometry_ops import DTYPE
from thermoreflect.gradcheck_ops import gradcheck
from thermoreflect.params import ParamVector
from thermoreflect.util.py.executor import make_executor


def _squared_norm(p: ParamVector) -> torch.Tensor:
    return (p.values * p.values).sum()


def test_squared_norm_gradient():
    report = gradcheck(_squared_norm, np.array([1.0, 2.0]))
    np.testing.assert_allclose(report.analytic, [2, 4])
    np.testing.assert_allclose(report.numeric, [2, 4], rtol=1e-9)
    assert report.relative_error < 1e-9
    assert report.passed
    assert report.names == ("x[0]", "x[1]")
    assert report.failing == []


def test_named_segments_in_report():
    params = ParamVector([("a", 1), ("b", 2)], torch.tensor([1.0, -1.0, 0.5], dtype=DTYPE))
    report = gradcheck(_squared_norm, params)
    assert report.names == ("a[0]", "b[0]", "b[1]")
    table = report.to_table()
    assert "b[1]" in table
    assert table.splitlines()[-1].endswith("PASS")


def test_discontinuous_loss_fails():
    def step(p: ParamVector) -> torch.Tensor:
        x = p.values
        return torch.where(x > 0, x, x + 1).sum()

    report = gradcheck(step, torch.zeros(1, dtype=DTYPE))
    assert not report.passed
    assert report.failing == ["x[0]"]
    assert "FAIL" in report.to_table()


def test_loss_without_gradient_reports_zero_analytic():
    report = gradcheck(lambda p: (p.values > 0).to(DTYPE).sum(), torch.ones(2, dtype=DTYPE))
    np.testing.assert_array_equal(report.analytic, [0, 0])
    np.testing.assert_array_equal(report.numeric, [0, 0])
    assert report.passed


def test_non_finite_loss_at_point():
    with pytest.raises(GradcheckError, match="check point"):
        gradcheck(lambda p: torch.log(p.values).sum(), torch.zeros(1, dtype=DTYPE))


def test_non_finite_loss_at_shifted_point_names_coordinate():
    with pytest.raises(GradcheckError, match=r"x\[1\] -"):
        gradcheck(lambda p: torch.log(p.values).sum(), torch.tensor([1.0, 1e-6], dtype=DTYPE))


def test_invalid_step():
    with pytest.raises(GradcheckError):
        gradcheck(_squared_norm, np.ones(2), h=0)


def test_parallel_evaluations_match_sequential():
    x = torch.tensor([0.3, -1.2, 2.5, 0.7], dtype=DTYPE)

    def loss(p: ParamVector) -> torch.Tensor:
        return torch.sin(p.values).prod() + (p.values ** 3).sum()

    sequential = gradcheck(loss, x)
    parallel = gradcheck(loss, x, executor=make_executor(3))
    np.testing.assert_array_equal(sequential.numeric, parallel.numeric)
    assert parallel.passed


if __name__ == "__main__":
    main()
