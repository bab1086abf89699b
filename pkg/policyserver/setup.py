"""Metadata lives in pyproject.toml; this duplicate subset keeps legacy
``setup.py develop`` installs working on old setuptools."""

from setuptools import find_packages, setup

setup(
    name="policyserver",
    version="0.1.0",
    package_dir={"": "src"},
    packages=find_packages(where="src"),
    python_requires=">=3.10",
    entry_points={"console_scripts": ["policyserver = policyserver.cli:main"]},
)
