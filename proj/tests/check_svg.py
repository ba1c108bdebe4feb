#!/usr/bin/env python3
"""Run the CLI through the project stage and check every scatter plot parses as XML
with one circle per projected document and one label per cluster."""
import csv
import pathlib
import subprocess
import sys
import xml.etree.ElementTree as ET

cli, config, out = sys.argv[1], sys.argv[2], pathlib.Path(sys.argv[3])
for stage in ["filter", "tfidf", "embed", "cluster", "project"]:
    subprocess.run([cli, "--config", config, "--out-dir", str(out), stage], check=True)

ns = "{http://www.w3.org/2000/svg}"
plots = sorted(out.glob("scatter_k*.svg"))
if not plots:
    sys.exit("no scatter plots written")
for svg in plots:
    k = int(svg.stem.split("_k")[1])
    root = ET.parse(svg).getroot()
    with open(out / f"projection_k{k}.csv") as f:
        n = sum(1 for _ in csv.DictReader(f))
    circles = len(root.findall(f".//{ns}circle"))
    labels = len(root.findall(f".//{ns}text"))
    if circles != n or labels != k:
        sys.exit(f"{svg.name}: {circles} circles / {labels} labels, expected {n} / {k}")
    print(f"{svg.name}: well-formed, {circles} points, {labels} labels")
