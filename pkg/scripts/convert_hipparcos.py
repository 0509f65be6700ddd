"""Convert the HIPPARCOS main catalogue (hip_main.dat, pipe separated) to the
catalog CSV schema ``id,ra_deg,dec_deg,mag``.

    python scripts/convert_hipparcos.py hip_main.dat hip.csv --max-mag 7

Fields used (0-based after splitting on '|'): 1 HIP number, 5 Vmag,
8 RA (deg, ICRS epoch J1991.25), 9 Dec (deg). Rows without a position or
magnitude are skipped. Proper motion is ignored.
"""

import argparse
import csv


def convert(src, dst, max_mag: float) -> tuple[int, int]:
    kept = skipped = 0
    with open(src, encoding="ascii", errors="replace") as fin, open(dst, "w", newline="") as fout:
        out = csv.writer(fout, lineterminator="\n")
        out.writerow(("id", "ra_deg", "dec_deg", "mag"))
        for line in fin:
            f = line.split("|")
            try:
                hip = f"HIP{int(f[1])}"
                mag = float(f[5])
                ra = float(f[8])
                dec = float(f[9])
            except (IndexError, ValueError):
                skipped += 1
                continue
            if mag > max_mag:
                continue
            out.writerow((hip, repr(ra), repr(dec), repr(mag)))
            kept += 1
    return kept, skipped


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src")
    ap.add_argument("dst")
    ap.add_argument("--max-mag", type=float, default=99.0)
    args = ap.parse_args()
    kept, skipped = convert(args.src, args.dst, args.max_mag)
    print(f"wrote {kept} stars to {args.dst} ({skipped} incomplete rows skipped)")


if __name__ == "__main__":
    main()
