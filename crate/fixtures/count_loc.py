#!/usr/bin/env python3
"""Counts non-blank physical lines of a file. Usage: count_loc.py FILE"""
import sys

with open(sys.argv[1], encoding="utf-8") as f:
    print(sum(1 for line in f.read().splitlines() if line.strip()))
