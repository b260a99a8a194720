#!/usr/bin/env python3
#
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

import io

import setuptools

with io.open("version.txt", encoding="utf-8") as f:
    version = f.read().strip()
with io.open("README.md", encoding="utf-8") as f:
    long_description = f.read()
with open("thermoreflect/requirements.txt") as f:
    requirements = [ln.split("#")[0].rstrip() for ln in f.readlines()]

setuptools.setup(
    name="thermoreflect",
    version=version,
    description="Reconstruct a person from their thermal reflection in mirror-like objects",
    author="the thermoreflect authors",
    long_description=long_description,
    long_description_content_type="text/markdown",
    license="Apache 2.0",
    packages=setuptools.find_packages(include=["thermoreflect", "thermoreflect.*"]),
    install_requires=requirements,
    entry_points={
        "console_scripts": ["thermoreflect=thermoreflect.bin.thermoreflect:run"],
    },
    python_requires=">=3.8",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: Apache Software License",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering :: Image Processing",
    ],
    zip_safe=False,
)
