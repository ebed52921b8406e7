#!/usr/bin/env python

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from core.config      import SystemParams          # noqa: E402
from core.hamiltonian import weak_coupling_report  # noqa: E402
from core.units       import convert               # noqa: E402

# Quick sanity check of the LAPACK build and the constant tables
try:
    report = weak_coupling_report(SystemParams(), 0.05)
    print(f"84-level diagonalization OK, max deviation {report.max_deviation:.3e} K")
    print(f"0.0175 K = {convert(0.0175, 'K', 'MHz'):.2f} MHz")
except Exception as e:
    print(f"Numerical check failed: {e}")
    sys.exit(1)
