"""Boundedness of the X3 weight integral for two periodic fields.

``f = sin(2 pi x) + 2`` keeps the integral bounded (limit ln 3); ``f = sin(2 pi x)``
has zeros and the integral grows without bound.
"""

import numpy as np

from isorealize import catalog
from isorealize.periodic import boundedness_scan


def main():
    for name, cap in (("fgh", 50.0), ("fgh-zero", np.inf)):
        scan = boundedness_scan(catalog.get(name).field, cap=cap)
        rec = max(scan.records, key=lambda r: r.I[-1])
        series = ", ".join(f"{T:g}:{v:.4g}" for T, v in zip(rec.horizons, rec.I))
        print(f"{name:9s} {scan.verdict:10s} worst start {rec.start}")
        print(f"          I(T) = {series}")
    print(f"ln 3 = {np.log(3.0):.6f}")


if __name__ == "__main__":
    main()
