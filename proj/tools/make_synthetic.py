#!/usr/bin/env python3
"""Generate the small synthetic grant corpus and word vectors under data/synthetic/.

Eight latent topics, each with its own vocabulary and funding trajectory,
plus shared filler words. Output is fully determined by --seed.
"""
import argparse
import csv
import pathlib

import numpy as np

TOPICS = {
    "immunotherapy": "immune tcell checkpoint antibody car lymphocyte antigen cytokine pd1 vaccine "
                     "immunotherapy tolerance macrophage interferon neoantigen adoptive".split(),
    "imaging": "imaging mri pet contrast tomography ultrasound radiomics scanner detection screening "
               "mammography probe fluorescence resolution biomarker diagnostic".split(),
    "genomics": "genome sequencing mutation variant exome germline somatic allele polymorphism "
                "genotype locus heritability chromosome methylation epigenetic transcriptome".split(),
    "radiation": "radiation dose proton beam dosimetry radiotherapy fractionation isotope brachytherapy "
                 "particle photon accelerator linac irradiation shielding physics".split(),
    "signaling": "kinase pathway signaling receptor phosphorylation ras mtor akt ligand cascade "
                 "inhibitor protein membrane transduction enzyme substrate".split(),
    "prevention": "smoking cessation tobacco diet obesity exercise behavioral intervention community "
                  "adherence counseling lifestyle survey cohort disparities outreach".split(),
    "nanomedicine": "nanoparticle delivery liposome polymer encapsulation release carrier formulation "
                    "nanomedicine targeting conjugate micelle payload gold silica hydrogel".split(),
    "metastasis": "metastasis invasion migration stroma microenvironment angiogenesis dissemination "
                  "adhesion matrix fibroblast hypoxia vascular niche colonization emt integrin".split(),
}
FILLER = ("study aim project specific approach model determine develop novel role data mechanism "
          "hypothesis test result analysis evaluate preliminary significant patient clinical tumor "
          "cancer cell treatment response therapy human mouse effect function level").split()
STOP = "the of and to in we will this that for with is are be by on these our which from as an".split()

# (base count per year, linear trend per year, first year, last year)
TRAJECTORIES = {
    "immunotherapy": (1.0, 0.45, 2000, 2020),
    "imaging": (3.0, 0.05, 2000, 2020),
    "genomics": (1.5, 0.25, 2000, 2020),
    "radiation": (4.0, -0.12, 2000, 2020),
    "signaling": (3.5, -0.05, 2000, 2020),
    "prevention": (2.5, 0.0, 2000, 2020),
    "nanomedicine": (1.5, 0.3, 2006, 2020),
    "metastasis": (3.0, -0.1, 2000, 2014),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=pathlib.Path(__file__).resolve().parent.parent / "data" / "synthetic",
                    type=pathlib.Path)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--dim", type=int, default=16)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)

    centres = {t: rng.normal(size=args.dim) * 2.0 for t in TOPICS}
    rows = []
    n = 0
    for topic, words in TOPICS.items():
        base, slope, first, last = TRAJECTORIES[topic]
        for year in range(first, last + 1):
            count = max(0, int(round(base + slope * (year - 2000) + rng.normal(scale=0.5))))
            for _ in range(count):
                n += 1
                length = int(rng.integers(60, 110))
                body = []
                for _ in range(length):
                    u = rng.random()
                    if u < 0.55:
                        body.append(words[rng.integers(len(words))])
                    elif u < 0.8:
                        body.append(FILLER[rng.integers(len(FILLER))])
                    else:
                        body.append(STOP[rng.integers(len(STOP))])
                body[0] = body[0].capitalize()
                inst = "CA" if rng.random() < 0.85 else str(rng.choice(["HL", "GM", "AI"]))
                act = str(rng.choice(["R01", "R01", "R01", "R21", "R03", "R25", "P01", "U01"]))
                amount = int(rng.integers(100, 2000)) * 1000
                title = f"{topic.capitalize()} study {n}"
                rows.append([f"G{n:05d}", title, " ".join(body) + ".", year, amount, inst, act, "HHS"])
    # a few records that the funnel removes for other reasons
    rows.append([f"G{n + 1:05d}", "Empty abstract", "", 2010, 250000, "CA", "R01", "HHS"])
    rows.append([f"G{n + 2:05d}", "Too short", "Kinase pathway signaling.", 2011, 250000, "CA", "R01", "HHS"])
    order = rng.permutation(len(rows))
    with open(args.out / "grants.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["record_id", "title", "abstract", "fiscal_year", "amount", "institute", "activity_code",
                    "department"])
        for i in order:
            w.writerow(rows[i])

    vectors = {}
    for topic, words in TOPICS.items():
        for word in words:
            vectors[word] = centres[topic] + rng.normal(scale=0.6, size=args.dim)
    for word in FILLER:
        vectors[word] = rng.normal(scale=0.5, size=args.dim)
    with open(args.out / "vectors.txt", "w") as f:
        f.write(f"{len(vectors)} {args.dim}\n")
        for word, v in vectors.items():
            f.write(word + " " + " ".join(f"{x:.6f}" for x in v) + "\n")
    print(f"wrote {len(rows)} records and {len(vectors)} vectors to {args.out}")


if __name__ == "__main__":
    main()
