"""Run the unordered scenario end to end and print the assertion digest.

Equivalent to `doublephase run scenarios/unordered_sweep.yaml` followed by
`doublephase report <outdir>`, kept as a script so the digest is one
function call away from a library user.
"""
import tempfile

from doublephase.runner import load_config, perform_run, write_report

config = load_config("scenarios/unordered_sweep.yaml")
with tempfile.TemporaryDirectory() as outdir:
    code, manifest, traj = perform_run(config, outdir)
    print(write_report(outdir))
    print(f"exit status: {code}")
    hi = manifest["summary"]["higher_integrability"]
    print("gradient modular table (sigma -> value):")
    for s, v in sorted(hi.items()):
        print(f"  {s:4.2f} -> {v:.6f}")
