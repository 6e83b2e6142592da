import os

# Cap BLAS threads before numpy gets imported anywhere: keeps timing sane on
# small matmuls and makes reruns byte-stable regardless of machine defaults.
for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
