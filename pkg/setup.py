import os

from setuptools import setup

ext_modules = []
if not os.environ.get("STENCILFORGE_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        print("Cython/numpy unavailable; installing pure-Python kernels only")
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "stencilforge._ckernels",
                    ["src/stencilforge/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
