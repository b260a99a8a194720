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
import time

import pytest

from tests.test_main import main
from thermoreflect.util.py import progress


@pytest.mark.parametrize(
    "seconds,expected",
    (
        (0, "0 ms"),
        (0.25, "250 ms"),
        (5, "5.000 seconds"),
        (90, "1m 30s"),
        (3725, "1h 2m 5s"),
        (7200, "2h 0m 0s"),
    ),
)
def test_Duration(seconds: float, expected: str):
    assert progress.Duration(seconds) == expected


def test_ProfileTimer_stop_freezes_elapsed():
    timer = progress.ProfileTimer()
    time.sleep(0.01)
    timer.Stop()
    elapsed = timer.elapsed
    time.sleep(0.01)
    assert timer.elapsed == elapsed
    assert timer.elapsed_ms >= 10


def test_Profile_prints_name_and_duration():
    messages = []
    with progress.Profile("Did a thing", print_to=messages.append) as timer:
        pass
    assert timer.end is not None
    assert len(messages) == 1
    assert messages[0].startswith("Did a thing in ")


def test_Profile_callable_name():
    messages = []
    with progress.Profile(lambda t: f"Took {t >= 0}", print_to=messages.append):
        pass
    assert messages[0].startswith("Took True in ")


def test_Profile_default_name():
    messages = []
    with progress.Profile(print_to=messages.append):
        pass
    assert messages[0].startswith("completed in ")


@pytest.mark.parametrize("disable", (None, True, False))
def test_ProgressBar_yields_all_items(disable):
    items = list(progress.ProgressBar(range(5), "counting", total=5, disable=disable))
    assert items == [0, 1, 2, 3, 4]


if __name__ == "__main__":
    main()
