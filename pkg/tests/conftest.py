import os

# pin BLAS threading before numpy loads anywhere so test runs are bitwise
# reproducible (mirrors the ATTNGAN_THREADS=1 default)
os.environ.setdefault("ATTNGAN_THREADS", "1")
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, os.environ["ATTNGAN_THREADS"])
