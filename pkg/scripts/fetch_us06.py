"""Regenerate the bundled US06 schedule (src/ecoplatoon/data/us06.csv).

Tries the EPA dynamometer schedule first. Without network access to EPA it
falls back to the copy NREL ships inside the ``fastsim`` wheel, which stores
speeds in m/s; those are converted back to mph (0.1 mph resolution).
"""
import argparse
import csv
import io
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

EPA_URL = "https://www.epa.gov/sites/default/files/2015-10/us06col.txt"
FASTSIM = "fastsim==2.1.2"
MPS_PER_MPH = 0.44704
HEADER = "# EPA US06 Supplemental FTP driving schedule (public domain)\n# units=mph\ntime,speed\n"


def from_epa(timeout=20):
    with urllib.request.urlopen(EPA_URL, timeout=timeout) as resp:
        text = resp.read().decode("latin-1")
    rows = []
    for line in text.splitlines():
        parts = line.split()
        if len(parts) == 2:
            try:
                rows.append((int(parts[0]), float(parts[1])))
            except ValueError:
                continue
    return rows


def from_fastsim():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", FASTSIM, "--no-deps", "-d", tmp, "-q"], check=True)
        wheel = next(Path(tmp).glob("fastsim-*.whl"))
        with zipfile.ZipFile(wheel) as zf:
            text = zf.read("fastsim/resources/cycles/us06.csv").decode()
    reader = csv.DictReader(io.StringIO(text))
    return [(int(float(r["cycSecs"])), round(float(r["cycMps"]) / MPS_PER_MPH, 1)) for r in reader]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    default = Path(__file__).resolve().parents[1] / "src" / "ecoplatoon" / "data" / "us06.csv"
    ap.add_argument("--out", type=Path, default=default)
    ap.add_argument("--offline", action="store_true", help="skip the EPA download")
    args = ap.parse_args(argv)
    rows = None
    if not args.offline:
        try:
            rows = from_epa()
        except OSError as exc:
            print(f"EPA download failed ({exc}); using the fastsim copy", file=sys.stderr)
    rows = rows or from_fastsim()
    body = "".join(f"{t},{v:.1f}\n" for t, v in rows)
    args.out.write_text(HEADER + body)
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
