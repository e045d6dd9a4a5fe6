"""Print an SNR-by-scheme table from a report.json (any metric column)."""

import argparse
import json
from collections import defaultdict


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("report")
    ap.add_argument("--metric", default="mi_bits", choices=["mi_bits", "csim", "ser", "entropy_bits"])
    ap.add_argument("--family", default="gaussian")
    args = ap.parse_args()

    with open(args.report) as f:
        doc = json.load(f)
    table = defaultdict(dict)
    for r in doc["records"]:
        if r["family"] == args.family:
            table[r["snr_db"]][r["scheme"]] = r[args.metric]
    schemes = sorted({s for row in table.values() for s in row})
    print(f"# {doc['modulation_order']}-QAM, {args.family} noise, {args.metric}")
    print("snr_db," + ",".join(schemes))
    for snr in sorted(table):
        print(f"{snr:g}," + ",".join(f"{table[snr].get(s, float('nan')):.4f}" for s in schemes))


if __name__ == "__main__":
    main()
