"""Write the synthetic desk catalog used by default campaigns to a CSV file.

    python scripts/make_desk_catalog.py desk.csv --stars 5000 --seed 0
"""

import argparse

from evrate.catalog import generate_desk_catalog, write_catalog


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--stars", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mag-min", type=float, default=-1.0)
    ap.add_argument("--mag-max", type=float, default=6.5)
    args = ap.parse_args()
    cat = generate_desk_catalog(args.stars, seed=args.seed, mag_min=args.mag_min, mag_max=args.mag_max)
    write_catalog(cat, args.out)
    print(f"wrote {len(cat)} stars to {args.out}")


if __name__ == "__main__":
    main()
