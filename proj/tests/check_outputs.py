#!/usr/bin/env python3
"""Runs a small pipeline through the milab binary, validates report.json
against the documented schema and reads every PGM with Pillow."""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema
from PIL import Image


def run(milab, command, config, workdir):
    path = workdir / f"{command}.json"
    path.write_text(json.dumps(config))
    proc = subprocess.run([milab, command, "--config", str(path)], capture_output=True, text=True)
    if proc.returncode != 0:
        sys.exit(f"{command} exited {proc.returncode}: {proc.stderr}")
    return proc.stdout


def main():
    milab, schema_path = sys.argv[1], Path(sys.argv[2])
    schema = json.loads(schema_path.read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)

    with tempfile.TemporaryDirectory() as tmp:
        work = Path(tmp)
        gen = {"num_slides": 60, "instances_per_slide": 20, "input_dim": 6, "bag_size": 8,
               "bags_per_slide": 2, "mimic_fraction": 0.1, "seed": 3}
        run(milab, "gen", {"generator": gen, "out": "data"}, work)
        for comp in ("additive", "joint"):
            model = {"input_dim": 6, "feature_dim": 8, "attention_hidden": 8, "predictor_hidden": 8,
                     "composition": comp}
            train = {"epochs": 2, "bag_size": 8, "bags_per_slide": 2, "learning_rate": 0.001}
            run(milab, "train", {"dataset": "data", "model": model, "train": train,
                                 "out": f"model_{comp}"}, work)
            run(milab, "eval", {"dataset": "data", "checkpoint": f"model_{comp}/model.ckpt",
                                "eval": {"bag_size": 8, "num_bags": 3}, "out": f"eval_{comp}"}, work)
            report = json.loads((work / f"eval_{comp}" / "report.json").read_text())
            errors = sorted(validator.iter_errors(report), key=lambda e: list(e.path))
            for e in errors:
                print(f"{comp}: {'/'.join(map(str, e.path))}: {e.message}")
            if errors:
                sys.exit(1)
            print(f"{comp} report.json valid")

        run(milab, "explain", {"dataset": "data", "checkpoint": "model_additive/model.ckpt",
                               "slide": "slide_0001", "out": "explain"}, work)
        pgms = sorted((work / "explain").glob("*.pgm"))
        if len(pgms) != 4:
            sys.exit(f"expected 4 PGMs, found {len(pgms)}")
        rows = (work / "explain" / "contributions.csv").read_text().splitlines()[1:]
        expected = {(int(r.split(",")[1]), int(r.split(",")[2])): r.split(",") for r in rows}
        for pgm in pgms:
            with Image.open(pgm) as img:
                if img.format != "PPM" or img.mode != "L":
                    sys.exit(f"{pgm.name}: format {img.format} mode {img.mode}")
                width, height = img.size
                if width * height < len(rows):
                    sys.exit(f"{pgm.name}: {width}x{height} too small for {len(rows)} instances")
                if pgm.name.startswith("class_"):
                    c = int(pgm.stem.split("_")[1])
                    col = 5 + 3 + c  # instance cols, then 3 raw columns
                    for (r, cc), cells in expected.items():
                        want = round(float(cells[col]) * 255)
                        if abs(img.getpixel((cc, r)) - want) > 1:
                            sys.exit(f"{pgm.name}: pixel ({r},{cc}) {img.getpixel((cc, r))} != {want}")
            print(f"{pgm.name} read by Pillow ({width}x{height})")


if __name__ == "__main__":
    main()
