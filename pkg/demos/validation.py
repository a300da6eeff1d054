"""
Checking the building blocks
============================

Each suite compares a component against an independent reference:
special functions against scipy, samplers against their exact moments,
and bridge moment formulas against a brute-force bridge oracle.  Every
check carries its own tolerance and a pass flag.
"""

from adaptheston.validation import run_validation

for suite in ("specfun", "samplers"):
    checks = run_validation(suite, seed=11)
    failed = [c for c in checks if not c.passed]
    print(f"{suite}: {len(checks) - len(failed)}/{len(checks)} checks pass")
    for c in checks[:4]:
        print(f"  {c.check:<40} {c.value:.6g} vs {c.reference:.6g}")
