"""Pin BLAS/OpenMP thread counts from TREESOLVE_THREADS before numpy loads."""

import os

_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "BLIS_NUM_THREADS",
         "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS")


def pin_threads() -> int:
    raw = os.environ.get("TREESOLVE_THREADS", "1").strip() or "1"
    try:
        n = max(1, int(raw))
    except ValueError:
        n = 1
    for var in _VARS:
        if "TREESOLVE_THREADS" in os.environ:
            os.environ[var] = str(n)
        else:
            os.environ.setdefault(var, str(n))
    return n


THREADS = pin_threads()
