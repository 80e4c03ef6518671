#!/usr/bin/env python3
"""
alphaforge - Main Program

Builds behavioural alpha factors from daily OHLCV bars, trains return models
on them and measures how well the model scores rank future returns.
Features:
- Small factor language with 43 bundled behavioural factors
- Seeded synthetic panels with an optional planted signal
- Dual-task MLP, 1-D CNN and linear SVR trained from scratch on numpy
- Daily rank IC, ICIR, Sharpe and a top-k / bottom-k backtest
- Shapley attribution arranged as a factor heatmap grid

Usage:
    python main.py pipeline --config configs/planted_signal.ini
    python main.py compare --config configs/planted_signal.ini
    python main.py evaluate --signals runs/x/signals.csv --panel runs/x/panel.csv --out runs/x
    python main.py <subcommand> --help
"""
import sys

from alphaforge.cli import main

if __name__ == "__main__":
    sys.exit(main())
