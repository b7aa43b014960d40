#!/usr/bin/env python3
"""Regenerates the checked-in fixtures. Output is deterministic."""
import json
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent

FIG2_CONTEXT = (
    "Because of reports of anaplastic transformation following irradiation, this study examines the incidence "
    "of anaplastic transformation and local control of these lesions. This review of seven @entity1 who had "
    "@entity189 of the @entity135 that was treated with irradiation shows local control in 71% of cases. "
    "There were no cases of anaplastic transformation. This report adds to the literature two cases of "
    "\"de-differentiation\" to less differentiated @entity957 ; one such case occurred after surgery alone. "
    "The literature is reviewed. Overall, anaplastic transformation is reported in 7% of @entity1 who had "
    "irradiation. De-differentiation occurs after surgery as well. The rate of local control with irradiation "
    "is less than 50%; with surgery it is 85%. It is concluded that surgery should be used if the procedure has "
    "acceptable morbidity. Otherwise, irradiation can be used. Failures can be salvaged surgically. "
    "\"Anaplastic transformation\" should not affect treatment approach."
)


def biomrc_sample():
    records = [
        ("fig2", FIG2_CONTEXT,
         "Radiotherapy in the treatment of XXXX of the @entity135 .",
         ["@entity1 :: ['patients']", "@entity135 :: ['head and neck']",
          "@entity957 :: ['squamous carcinomas']", "@entity189 :: ['verrucous carcinoma']"],
         "@entity189 :: ['verrucous carcinoma']"),
        ("b2", "Serum levels of @entity12 were raised in @entity4 with @entity77 . Levels fell after treatment.",
         "Elevated @entity12 in [MASK] with renal failure .",
         ["@entity12 :: ['cystatin C']", "@entity4 :: ['children']", "@entity77 :: ['nephrotic syndrome']"],
         "@entity4 :: ['children']"),
        ("b3", "We describe @entity30 in two @entity8 . Both @entity8 recovered after @entity30 resolved.",
         "XXXX in adult @entity8 : two case reports .",
         ["@entity30 :: ['acute pancreatitis']", "@entity8 :: ['patients', 'Patient']"],
         "@entity30 :: ['acute pancreatitis']"),
        ("b4", "Expression of @entity501 was measured in @entity6 . @entity501 correlated with @entity42 grade. "
               "No association with @entity9 was seen.",
         "Prognostic value of @entity501 expression in XXXX .",
         ["@entity501 :: ['p53']", "@entity6 :: ['tumour samples']", "@entity42 :: ['glioma']",
          "@entity9 :: ['age']"],
         "@entity6 :: ['tumour samples']"),
        ("b5", "@entity2 reduced @entity71 in @entity3 . The effect of @entity2 on @entity71 was dose dependent.",
         "@entity2 lowers XXXX in hypertensive rats .",
         ["@entity2 :: ['losartan']", "@entity71 :: ['blood pressure']", "@entity3 :: ['rats']"],
         "@entity71 :: ['blood pressure']"),
    ]
    return {
        "abstracts": [r[1] for r in records],
        "titles": [r[2] for r in records],
        "entities_list": [r[3] for r in records],
        "answers": [r[4] for r in records],
        "ids": [r[0] for r in records],
    }


# Published contingency counts for the two single readers and the MLP
# ensemble on the test split.
TOTAL, BOTH, ONLY_A, ONLY_B = 6250, 4668, 753, 345
NEITHER = TOTAL - BOTH - ONLY_A - ONLY_B
ENSEMBLE_IN_UNION, ENSEMBLE_OUTSIDE = 5471, 26


def fig4_predictions():
    rng = random.Random(4)
    kinds = ["both"] * BOTH + ["a"] * ONLY_A + ["b"] * ONLY_B + ["neither"] * NEITHER
    rng.shuffle(kinds)
    union_idx = [i for i, k in enumerate(kinds) if k != "neither"]
    neither_idx = [i for i, k in enumerate(kinds) if k == "neither"]
    ens = set(rng.sample(union_idx, ENSEMBLE_IN_UNION)) | set(rng.sample(neither_idx, ENSEMBLE_OUTSIDE))
    a, b, e = [], [], []
    for i, k in enumerate(kinds):
        qid = f"q{i:04d}"
        gold = f"@entity{1 + i % 7}"
        wrong = f"@entity{100 + i % 5}"
        a.append({"id": qid, "predicted": gold if k in ("both", "a") else wrong, "gold": gold})
        b.append({"id": qid, "predicted": gold if k in ("both", "b") else wrong, "gold": gold})
        e.append({"id": qid, "predicted": gold if i in ens else wrong, "gold": gold})
    return a, b, e


def dump(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=1, ensure_ascii=False)
        f.write("\n")


def main():
    dump(HERE / "biomrc_sample.json", biomrc_sample())
    a, b, e = fig4_predictions()
    dump(HERE / "fig4_model_a.json", {"predictions": a})
    dump(HERE / "fig4_model_b.json", {"predictions": b})
    dump(HERE / "fig4_ensemble.json", {"predictions": e})
    dump(HERE / "fig4_counts.json", {
        "total": TOTAL, "correct_a": BOTH + ONLY_A, "correct_b": BOTH + ONLY_B, "both": BOTH,
        "neither": NEITHER, "ensemble_in_union": ENSEMBLE_IN_UNION, "ensemble_outside_union": ENSEMBLE_OUTSIDE,
        "published_percent": {"model_a": 86.74, "model_b": 80.21, "ensemble": 88.00, "union": 92.26},
    })


if __name__ == "__main__":
    main()
