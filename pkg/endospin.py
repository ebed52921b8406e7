#!/usr/bin/env python3

import os
import sys

# Keep BLAS single-threaded; field grids are parallelized by the CLI itself
os.environ.update({
    'OPENBLAS_NUM_THREADS': '1',
    'OMP_NUM_THREADS': '1'
})

from core.cli import dispatch  # noqa: E402

if __name__ == "__main__":
    sys.exit(dispatch())
