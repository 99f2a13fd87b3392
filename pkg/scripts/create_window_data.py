#!/usr/bin/env python3
"""
Create synthetic intraday window data in the `window_id,t,price` schema.

Windows are simulated midprice paths, written with timestamps in seconds
from the window start so they load exactly like recorded market windows.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Union

from market import MODELS, ModelParams, save_windows_csv, simulate

logger = logging.getLogger(__name__)


def generate_windows(params: ModelParams, n_windows: int, seed: int, path: Union[str, Path],
                     window_length: float = 900.0, threads: int = 1) -> Path:
    """Simulate n_windows paths and save them as consecutive windows w00000, w00001, ..."""
    batch = simulate(params, n_windows, seed, threads=threads)
    batch.window_ids = [f"w{i:05d}" for i in range(batch.n_paths)]
    path = Path(path)
    save_windows_csv(batch, path, window_length=window_length)
    logger.info(f"Saved {n_windows} synthetic {params.model} windows ({params.steps} steps, "
                f"{window_length:g}s each) to {path}")
    return path


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(description='Generate synthetic window CSV data')
    parser.add_argument('output', help='CSV file to write')
    parser.add_argument('--windows', type=int, default=200, help='number of windows')
    parser.add_argument('--model', choices=MODELS, default='bm')
    parser.add_argument('--sigma', type=float, default=0.02)
    parser.add_argument('--steps', type=int, default=300)
    parser.add_argument('--window-length', type=float, default=900.0, help='window length in seconds')
    parser.add_argument('--seed', type=int, default=0)
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
    params = ModelParams(model=args.model, sigma=args.sigma, T=1.0, steps=args.steps)
    path = generate_windows(params, args.windows, args.seed, args.output, window_length=args.window_length)
    print(f"✅ Generated {args.windows} windows")
    print(f"📁 Saved to {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
