"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time); the extension roughly halves the cost of the
sample-generation hot loop. If Cython or a C compiler is missing, the build
degrades to pure Python instead of failing.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "mrcl._kernels_c",
                ["src/mrcl/_kernels_c.pyx"],
                include_dirs=[numpy.get_include()],
                # fp-contract off: the regenerated sample path must round
                # identically to numpy's separate mul/add (no FMA fusion).
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
