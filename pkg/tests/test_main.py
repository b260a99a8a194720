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
"""The entry point of test files run as scripts."""
import os
import sys

import pytest


def main():
    """Run the tests of the calling file.

    Test files end with:

        if __name__ == "__main__":
            main()

    Set THERMOREFLECT_SKIP_SLOW=1 to deselect the end-to-end fits marked
    `slow`. If TEST_TOTAL_SHARDS is set, pytest-shard runs the share of the
    tests selected by TEST_SHARD_INDEX.
    """
    pytest_args = sys.argv + ["-vv"]
    if os.environ.get("THERMOREFLECT_SKIP_SLOW"):
        pytest_args += ["-m", "not slow"]
    num_shards = os.environ.get("TEST_TOTAL_SHARDS")
    if num_shards:
        shard_index = os.environ["TEST_SHARD_INDEX"]
        pytest_args += [f"--shard-id={shard_index}", f"--num-shards={num_shards}"]
    else:
        pytest_args += ["-p", "no:pytest-shard"]
    sys.exit(pytest.main(pytest_args))
