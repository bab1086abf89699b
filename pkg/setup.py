"""Build script for the optional compiled kernels.

The package is pure Python plus one small Cython extension holding the hot
DTW loop.  The extension is optional: if Cython or a C compiler is
unavailable the install still succeeds and the package falls back to the
pure implementation in ``crowdskills._kernels._pure`` at import time.

Project metadata lives in pyproject.toml; the subset duplicated below keeps
legacy ``setup.py develop`` installs working on old setuptools.
"""

from setuptools import find_packages, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext = Extension(
        "crowdskills._kernels._core",
        sources=["src/crowdskills/_kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level="3")
except ImportError:
    pass

setup(
    name="crowdskills",
    version="0.1.0",
    package_dir={"": "src"},
    packages=find_packages(where="src"),
    package_data={"crowdskills.data": ["scenes/*.scene", "scenarios/*.json"]},
    include_package_data=True,
    python_requires=">=3.10",
    install_requires=["numpy>=1.26", "scipy>=1.11"],
    extras_require={"dev": ["pytest>=8", "hypothesis>=6"]},
    entry_points={"console_scripts": ["crowdskills = crowdskills.cli:main"]},
    ext_modules=ext_modules,
)
