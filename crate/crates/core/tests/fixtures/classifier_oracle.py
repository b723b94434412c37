"""Independent oracle for the special-conditions classifier.

Phrase lists and matching rules are written out here independently of the
Rust code. Writes classifier_golden.csv.
"""
import csv
import pathlib

MHT = ["mental", "mntl", "mntal", "eval", "exam", "exm", "asses", "couns", "cnsl",
       "therap", "trt", "trea", "psy", "behavioral", "trmnt", "prescribed medicine",
       "prescribed meds", "psd meds", "mental health med", "mental med", "depress",
       "anger", "stress", "anxi", "mood disord"]
SUD = ["drug trt", "drg trt", "drug trea", "drg trea", "drug eval", "drg eval",
       "alcohol", "dart", "subs", "sub abus", "tasc"]
CORE = ["mental", "mntl", "mntal", "couns", "therap", "psy", "behavioral",
        "mental health med", "mental med", "depress", "anxi", "mood disord"]
NEG = ["court does not recommend"]
PROGRAM = ["program", "medical issu", "medical eval", "medical prob", "medical trea",
           "residential", "inpatient", "rehab"]
MH_COURT = ["s.t.e.p.", "mental health court", "by mh", "community resource court",
            "to crc", "in crc", "crc court", "crc prog", "complete crc", "by crc",
            "completed crc", "attend crc"]


def has(text, phrases):
    return any(p in text for p in phrases)


def classify(text, variant):
    t = text.lower()
    if has(t, NEG):
        return 0, 0
    sud = has(t, SUD)
    raw = has(t, MHT)
    base = raw and not (sud and not has(t, CORE))
    if variant == "broadest":
        m = raw or has(t, PROGRAM)
    elif variant == "base":
        m = base
    elif variant == "no_sud_overlap":
        m = base and not sud
    else:
        m = base and not has(t, MH_COURT)
    return int(m), int(sud)


TEXTS = [
    "",
    "pay costs and fees",
    "anger management couns weekly",
    "drug trt program, eval by TASC",
    "Court does not recommend mental health eval; DART",
    "substance abuse and mental health assessment",
    "obtain MNTL health evaluation",
    "mntal hlth follow up",
    "submit to psych exam",
    "EXM by licensed professional",
    "complete CNSL as directed",
    "attend therapy sessions",
    "TRT as directed by PO",
    "seek treatment",
    "behavioral health referral",
    "trmnt plan compliance",
    "take prescribed medicine",
    "take prescribed meds daily",
    "psd meds compliance",
    "mental health meds as prescribed",
    "mental med monitoring",
    "depression screening",
    "stress management class",
    "anxiety support group",
    "mood disorder clinic",
    "drg trt at county facility",
    "drug treatment as directed",
    "drg treatment",
    "drug eval within 30 days",
    "drg eval",
    "alcohol assessment, comply w/ DART",
    "no alcohol, no weapons",
    "DART cherry",
    "substance abuse assessment",
    "sub abuse classes",
    "TASC referral",
    "drug trt and couns",
    "alcohol treatment and therapy",
    "drug eval and psych follow up",
    "DART and anger management",
    "tasc and stress class",
    "residential program",
    "inpatient rehab",
    "medical issues to be addressed",
    "medical evaluation at jail",
    "enroll in S.T.E.P. program and mental health eval",
    "refer to mental health court",
    "supervised by MH team, psych eval",
    "community resource court referral; couns",
    "transfer to CRC; therapy",
    "participate in CRC program, mental health tx",
    "complete CRC and counseling",
    "completed CRC, mental eval",
    "attend CRC sessions, psych",
    "crc court supervision and therapy",
    "COURT DOES NOT RECOMMEND TREATMENT",
    "the court does not recommend drug trt",
    "community service 24 hours; anger class",
    "no contact with victim",
    "medical problems; drug trt",
]
assert len(TEXTS) == 60, len(TEXTS)
VARIANTS = ["broadest", "base", "no_sud_overlap", "no_mh_court"]

out = pathlib.Path(__file__).with_name("classifier_golden.csv")
with out.open("w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["text"] + [f"{v}_{k}" for v in VARIANTS for k in ("mht", "sudt")])
    for t in TEXTS:
        row = [t]
        for v in VARIANTS:
            row.extend(classify(t, v))
        w.writerow(row)
