"""Regenerates sample_bars.csv: three synthetic hourly symbols from 2021-01-01."""

import csv
import math
import random
from datetime import datetime, timedelta, timezone

SYMBOLS = [("BTCX", 30000.0, 0.00020, 0.010), ("ETHX", 800.0, 0.00030, 0.013), ("SOLX", 2.0, 0.00045, 0.018)]
BARS = 5000
START = datetime(2021, 1, 1, tzinfo=timezone.utc)


def main(path="sample_bars.csv", seed=20210101):
    rng = random.Random(seed)
    closes = [s[1] for s in SYMBOLS]
    with open(path, "w", newline="") as f:
        out = csv.writer(f, lineterminator="\n")
        out.writerow(["timestamp", "symbol", "open", "high", "low", "close", "volume"])
        for t in range(BARS):
            ts = (START + timedelta(hours=t)).strftime("%Y-%m-%d %H:%M:%S")
            market = rng.gauss(0.0, 1.0)
            for i, (sym, _, drift, vol) in enumerate(SYMBOLS):
                shock = 0.6 * market + 0.8 * rng.gauss(0.0, 1.0)
                open_ = closes[i]
                close = open_ * math.exp(drift - 0.5 * vol * vol + vol * shock)
                wick = abs(rng.gauss(0.0, vol * 0.5))
                high = max(open_, close) * (1.0 + wick)
                low = min(open_, close) * (1.0 - wick)
                volume = rng.lognormvariate(8.0, 0.5)
                out.writerow([ts, sym, f"{open_:.6f}", f"{high:.6f}", f"{low:.6f}", f"{close:.6f}", f"{volume:.3f}"])
                closes[i] = close


if __name__ == "__main__":
    main()
