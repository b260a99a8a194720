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
from typing import Optional


class DomainError(ValueError):
    """Exception raised if an input lies outside the domain of an op."""


class SceneParseError(ValueError):
    """Exception raised if a scene file cannot be parsed or validated."""

    def __init__(self, message: str, lineno: Optional[int] = None):
        self.message = message
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)


class ImageFormatError(ValueError):
    """Exception raised if an image, mesh, or grid file is malformed."""


class GradcheckError(ArithmeticError):
    """Exception raised if a gradient check evaluates a non-finite loss."""


class OptimizationError(ArithmeticError):
    """Exception raised if an optimizer step sees non-finite values."""


class FitError(ValueError):
    """Exception raised if a fit cannot be performed on its inputs."""


class MetricError(ValueError):
    """Exception raised if an evaluation metric receives invalid inputs."""
