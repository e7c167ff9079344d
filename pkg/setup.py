# Builds the compiled kernel core. A pure-numpy fallback is selected at
# import time when the extension is unavailable (see conther/kern/__init__.py).
#
#   pip install -e . --no-build-isolation

import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "conther.kern.cykernels",
        ["src/conther/kern/cykernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
