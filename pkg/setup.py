import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off: the compiled kernels must produce bit-identical float32
# results to the NumPy fallback, so FMA contraction is disabled. No
# -march=native for the same reason (keeps codegen portable and reproducible).
ext = Extension(
    "knn_dataflow._kernels",
    ["src/knn_dataflow/_kernels.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3", "-ffp-contract=off"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], language_level="3"))
