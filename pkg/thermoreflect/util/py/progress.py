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
"""This module aims to help evaluate the progress of long-running jobs."""
import datetime
import sys
import typing
from contextlib import contextmanager
from typing import Iterable, Optional, TypeVar

import tqdm
from absl import logging

T = TypeVar("T")


def Duration(seconds: float) -> str:
    """Format a duration in seconds as a short human readable string.

    >>> Duration(0.25)
    '250 ms'
    >>> Duration(3725)
    '1h 2m 5s'
    """
    if seconds < 1:
        return f"{int(round(seconds * 1000))} ms"
    if seconds < 60:
        return f"{seconds:.3f} seconds"
    whole = int(round(seconds))
    hours, rem = divmod(whole, 3600)
    minutes, secs = divmod(rem, 60)
    parts = []
    if hours:
        parts.append(f"{hours}h")
    if hours or minutes:
        parts.append(f"{minutes}m")
    parts.append(f"{secs}s")
    return " ".join(parts)


class ProfileTimer(object):
    """A profiling timer."""

    def __init__(self):
        self.start: datetime.datetime = datetime.datetime.utcnow()
        self.end: Optional[datetime.datetime] = None

    def Stop(self):
        if self.end:
            return
        self.end = datetime.datetime.utcnow()

    @property
    def elapsed(self) -> float:
        if self.end:
            return (self.end - self.start).total_seconds()
        else:
            return (datetime.datetime.utcnow() - self.start).total_seconds()

    @property
    def elapsed_ms(self) -> int:
        return int(round(self.elapsed * 1000))

    def __repr__(self):
        return Duration(self.elapsed)


@logging.skip_log_prefix
@contextmanager
def Profile(
    name: typing.Union[str, typing.Callable[[float], str]] = "",
    print_to: typing.Callable[[str], None] = lambda msg: logging.info(msg),
) -> ProfileTimer:
    """A context manager which prints the elapsed time upon exit.
    Args:
      name: The name of the task being profiled. A callback may be provided which
        is called at task completion with the elapsed duration in seconds as its
        argument.
      print_to: The function to print the result to.
    """
    name = name or "completed"
    timer = ProfileTimer()
    yield timer
    timer.Stop()
    if callable(name):
        name = name(timer.elapsed)
    print_to(f"{name} in {timer}")


def ProgressBar(
    iterable: Iterable[T],
    desc: str,
    total: Optional[int] = None,
    unit: str = "it",
    disable: Optional[bool] = None,
) -> Iterable[T]:
    """Wrap an iterable in a progress bar written to stderr.

    The bar is disabled when stderr is not a terminal unless `disable` is set
    explicitly, so that captured logs contain no carriage returns.
    """
    if disable is None:
        disable = not sys.stderr.isatty()
    return tqdm.tqdm(
        iterable,
        desc=desc,
        total=total,
        unit=unit,
        file=sys.stderr,
        disable=disable,
        leave=False,
    )
