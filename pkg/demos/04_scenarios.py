"""Run a bundled scenario and its identity table, then write both reports.

The same thing from the shell:

    rinverse run k1_e2_lambda0 --out reports
    rinverse verify box_rotated --out reports --format csv
"""

import sys
import tempfile

from rinverse import emit, identity_suite, run_scenario

name = sys.argv[1] if len(sys.argv) > 1 else "box_rotated"
report = run_scenario(name)
print(report.table())

table = identity_suite(name)
print(table.table())

out = tempfile.mkdtemp(prefix="rinverse-")
print("wrote", emit(report, out, "json"), "and", emit(table, out, "csv"))

# The negative controls are meant to fail, and fail in the right row.
bad = identity_suite("neg_corrupted_rotation")
print("corrupted rotation:", bad.check("rotation_commutation").status)
