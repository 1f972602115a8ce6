"""Regenerate everything under fixtures/ from the definitions below.

Run from the repository root: ``python3 scripts/build_fixtures.py``.
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

from iupc.base import ConstraintBase, save_base
from iupc.dsl import parse_document
from iupc.process import (
    ActivityRepository,
    Event,
    ResourceModel,
    Trace,
    parse_timestamp,
    schema_from_json,
    serialize_activity_repository,
    serialize_process_schema,
    serialize_resource_model,
    serialize_traces,
)

ROOT = Path(__file__).resolve().parent.parent / "fixtures"


def chain(sid: str, labels: list, extra_nodes=(), extra_edges=(), data_elements=()) -> dict:
    """Sequence start -> labels... -> end; a label may be (id, label, resources)."""
    nodes = [{"id": "start", "kind": "start"}]
    ids = []
    for i, item in enumerate(labels, start=1):
        if isinstance(item, tuple):
            nid, label, res = item
        else:
            nid, label, res = f"n{i}", item, ()
        node = {"id": nid, "kind": "activity", "label": label}
        if res:
            node["resources"] = list(res)
        nodes.append(node)
        ids.append(nid)
    nodes.append({"id": "end", "kind": "end"})
    seq = ["start", *ids, "end"]
    edges = [{"from": a, "to": b} for a, b in zip(seq, seq[1:])]
    return {"id": sid, "nodes": nodes, "control_edges": edges, "data_elements": list(data_elements), "data_edges": []}


SURGERY = {
    "id": "Invasive Surgery",
    "nodes": [
        {"id": "start", "kind": "start"},
        {"id": "n1", "kind": "activity", "label": "admit patient"},
        {"id": "n2", "kind": "activity", "label": "examine patient"},
        {"id": "g1", "kind": "and-split"},
        {"id": "n3", "kind": "activity", "label": "blood test"},
        {"id": "n4", "kind": "activity", "label": "record vitals"},
        {"id": "g2", "kind": "and-join"},
        {"id": "n5", "kind": "activity", "label": "sonography"},
        {"id": "n6", "kind": "activity", "label": "affirm diagnosis"},
        {"id": "n7", "kind": "activity", "label": "conduct surgery"},
        {"id": "n8", "kind": "activity", "label": "discharge"},
        {"id": "end", "kind": "end"},
    ],
    "control_edges": [
        {"from": "start", "to": "n1"},
        {"from": "n1", "to": "n2"},
        {"from": "n2", "to": "g1"},
        {"from": "g1", "to": "n3"},
        {"from": "g1", "to": "n4"},
        {"from": "n3", "to": "g2"},
        {"from": "n4", "to": "g2"},
        {"from": "g2", "to": "n5"},
        {"from": "n5", "to": "n6"},
        {"from": "n6", "to": "n7"},
        {"from": "n7", "to": "n8"},
        {"from": "n8", "to": "end"},
    ],
    "data_elements": [{"name": "patient", "type": "string"}],
    "data_edges": [
        {"activity": "n3", "data_element": "patient", "mode": "read"},
        {"activity": "n5", "data_element": "patient", "mode": "read"},
    ],
}

LAB = chain(
    "Lab Analysis",
    ["receive sample", ("n2", "centrifuge sample", ("centrifuge",)), "analyze sample", "report results"],
)

TREATMENT = {
    "id": "Treatment",
    "nodes": [
        {"id": "start", "kind": "start"},
        {"id": "n1", "kind": "activity", "label": "admit patient"},
        {"id": "x1", "kind": "xor-split"},
        {"id": "n2", "kind": "activity", "label": "blood test"},
        {"id": "n3", "kind": "activity", "label": "review chart"},
        {"id": "x2", "kind": "xor-join"},
        {"id": "n4", "kind": "activity", "label": "discharge"},
        {"id": "end", "kind": "end"},
    ],
    "control_edges": [
        {"from": "start", "to": "n1"},
        {"from": "n1", "to": "x1"},
        {"from": "x1", "to": "n2", "guard": "age >= 65"},
        {"from": "x1", "to": "n3", "guard": "age < 65"},
        {"from": "n2", "to": "x2"},
        {"from": "n3", "to": "x2"},
        {"from": "x2", "to": "n4"},
        {"from": "n4", "to": "end"},
    ],
    "data_elements": [{"name": "age", "type": "integer", "domain": {"min": 0, "max": 130}}],
    "data_edges": [{"activity": "n1", "data_element": "age", "mode": "write"}],
}

CLINIC_RULES = """\
constraint C1 {
  text 'Keep at least a day between the two anticoagulants';
  context all;
  on exists a is 'administer Aspirin', m is 'administer Marcumar';
  condition time(min_time_between(a, m, 24h));
}

constraint C2 {
  text 'Nobody is discharged from surgery before being operated on';
  context process 'Invasive Surgery' all;
  on exists d is 'discharge';
  require exists s is 'conduct surgery' and s eventually-precedes d;
}

constraint C3 {
  text 'Four hours must pass between blood test and sonography of one patient';
  context process 'Invasive Surgery' all;
  on exists a1 is 'blood test';
  require optional a2 is 'sonography' and a1 eventually-precedes a2;
  condition data(a1.patient == a2.patient) and time(min_time_between(a1, a2, 4h));
}

constraint C4 {
  text 'Samples are analyzed within two hours of arrival';
  context process 'Lab Analysis' all;
  on exists r is 'receive sample';
  require exists a is 'analyze sample' and r eventually-precedes a;
  condition time(max_time_between(r, a, 2h));
}

meta C5 {
  text 'Centrifuge activities carry the centrifuge lock';
  for each activity using 'centrifuge' require constraint C10;
}

constraint C6 {
  text 'Every operation is preceded by an examination';
  context process 'Invasive Surgery' all;
  on exists a2 is 'conduct surgery';
  require exists a1 is 'examine patient' and a1 eventually-precedes a2;
}

constraint C7 {
  text 'Whoever examines the patient also operates';
  context process 'Invasive Surgery' all;
  on exists e is 'examine patient', s is 'conduct surgery';
  condition resource(same-actor(e, s));
}

constraint C8 {
  text 'Older patients get a blood test';
  context process 'Treatment' all;
  on exists a is 'admit patient';
  require exists b is 'blood test' and a eventually-precedes b;
  condition data(a.age >= 62);
}

constraint C9 {
  text 'Discharge no earlier than one day after surgery';
  context process 'Invasive Surgery' all;
  on exists s is 'conduct surgery';
  require optional d is 'discharge' and s eventually-precedes d;
  condition time(min_time_between(s, d, 1d));
}

constraint C10 {
  text 'One sample at a time in the centrifuge';
  context process 'Lab Analysis' all;
  on exists c is 'centrifuge sample';
  behavior synchronize c 'centrifuge';
}

constraint C11 {
  text 'Diagnoses are affirmed by doctors';
  context process 'Invasive Surgery' all;
  on exists a1 is 'affirm diagnosis';
  behavior attribute a1 ROLE := 'Doctor';
}

constraint C12 {
  text 'Diagnosis and operation need two different people';
  context process 'Invasive Surgery' all;
  on exists a is 'affirm diagnosis', s is 'conduct surgery';
  condition resource(different-actor(a, s));
}

constraint C13 {
  text 'Centrifugation takes at most half an hour';
  context process 'Lab Analysis' all;
  on exists c is 'centrifuge sample';
  behavior attribute c MAX_DURATION := (30m);
}

constraint C14 {
  text 'Vitals are recorded after an ICU transfer';
  context all;
  on exists t is 'transfer to ICU';
  require exists v is 'record vitals' and t eventually-precedes v;
}

constraint C15 {
  text 'Reported samples are never discarded';
  context process 'Lab Analysis' all;
  on exists r is 'report results';
  absent 'discard sample';
}

constraint C16 {
  text 'Flag implausible ages on admission';
  context process 'Treatment' all;
  on exists a is 'admit patient';
  condition data(a.age > 120);
  trigger after a;
  behavior raise-exception a 'implausible age';
}
"""

REPO_EXTRA = ["administer Aspirin", "administer Marcumar", "transfer to ICU", "discard sample", "order x-ray"]

RESOURCES = ResourceModel(
    roles=frozenset({"Doctor", "Nurse", "Technician"}),
    actors=frozenset({"alice", "bob", "carol", "dave"}),
    role_assignments={
        "alice": frozenset({"Doctor"}),
        "bob": frozenset({"Nurse"}),
        "carol": frozenset({"Doctor"}),
        "dave": frozenset({"Technician"}),
    },
    resources=frozenset({"centrifuge"}),
)


def write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def write_schemas(directory: Path, objs: list[dict]) -> list:
    schemas = []
    for obj in objs:
        s = schema_from_json(obj)
        name = s.id.lower().replace(" ", "_") + ".json"
        write(directory / name, serialize_process_schema(s))
        schemas.append(s)
    return schemas


def make_base(path: Path, dsl: str, schemas: list, repo: ActivityRepository) -> ConstraintBase:
    if path.exists():
        shutil.rmtree(path)
    base = ConstraintBase.of(parse_document(dsl))
    base.identify(schemas, repo)
    save_base(base, path)
    return base


def ev(kind, label, occ, ts, actor=None, **data) -> Event:
    return Event(kind, label, occ, parse_timestamp(ts), actor, data)


def trace_file(path: Path, traces: list[Trace]) -> None:
    write(path, serialize_traces(traces))


def pick(names: list[str]) -> str:
    stmts = {s.id: s for s in parse_document(CLINIC_RULES)}
    from iupc.dsl import serialize_statement

    return "\n".join(serialize_statement(stmts[n]) for n in names)


def main() -> None:
    if ROOT.exists():
        shutil.rmtree(ROOT)

    # clinic scenario
    clinic = ROOT / "clinic"
    schemas = write_schemas(clinic / "schemas", [SURGERY, LAB, TREATMENT])
    labels = set().union(*(s.labels for s in schemas)) | set(REPO_EXTRA)
    repo = ActivityRepository(frozenset(labels))
    write(clinic / "repository.json", json.dumps({"labels": sorted(labels)}, indent=2) + "\n")
    assert serialize_activity_repository(repo) == (clinic / "repository.json").read_text()
    write(clinic / "resources.json", serialize_resource_model(RESOURCES))
    write(clinic / "rules.iupc", CLINIC_RULES)
    make_base(clinic / "base", CLINIC_RULES, schemas, repo)

    # worked examples used on their own
    write(ROOT / "examples" / "c6.iupc", pick(["C6"]))
    write(ROOT / "examples" / "c3.iupc", pick(["C3"]))
    write(ROOT / "examples" / "c11.iupc", pick(["C11"]))

    c6 = ROOT / "c6"
    c6_schemas = write_schemas(c6 / "schemas", [SURGERY])
    make_base(c6 / "base", pick(["C6"]), c6_schemas, repo)

    # data gap: guard at 65 against a constraint from 62
    gap = ROOT / "datagap"
    gap_schemas = write_schemas(gap / "schemas", [TREATMENT])
    make_base(gap / "base", pick(["C8"]), gap_schemas, repo)
    for age in (61, 62, 63, 64, 65):
        branch = "blood test" if age >= 65 else "review chart"
        t = Trace(
            f"t-age-{age}",
            "Treatment",
            (
                ev("start", "admit patient", "o1", "2024-03-01T08:00:00Z", "bob", age=age),
                ev("complete", "admit patient", "o1", "2024-03-01T08:10:00Z", "bob", age=age),
                ev("start", branch, "o2", "2024-03-01T09:00:00Z", "alice"),
                ev("complete", branch, "o2", "2024-03-01T09:20:00Z", "alice"),
                ev("start", "discharge", "o3", "2024-03-01T12:00:00Z", "alice"),
                ev("complete", "discharge", "o3", "2024-03-01T12:05:00Z", "alice"),
            ),
        )
        trace_file(gap / "traces" / f"age_{age}.jsonl", [t])

    # run-time traces against the clinic base
    traces = clinic / "traces"

    def c3(sono_start: str, sono_end: str, second_patient: str = "p1") -> Trace:
        return Trace(
            "s-1",
            "Invasive Surgery",
            (
                ev("start", "blood test", "o1", "2024-03-01T09:40:00Z", "bob", patient="p1"),
                ev("complete", "blood test", "o1", "2024-03-01T10:00:00Z", "bob", patient="p1"),
                ev("start", "sonography", "o2", sono_start, "alice", patient=second_patient),
                ev("complete", "sonography", "o2", sono_end, "alice", patient=second_patient),
            ),
        )

    trace_file(traces / "c3_three_hours.jsonl", [c3("2024-03-01T13:00:00Z", "2024-03-01T13:00:00Z")])
    trace_file(traces / "c3_five_hours.jsonl", [c3("2024-03-01T15:00:00Z", "2024-03-01T15:20:00Z")])
    trace_file(traces / "c3_other_patient.jsonl", [c3("2024-03-01T13:00:00Z", "2024-03-01T13:00:00Z", "p2")])
    nurse = Trace(
        "s-2",
        "Invasive Surgery",
        (
            ev("start", "affirm diagnosis", "o1", "2024-03-02T10:00:00Z", "bob"),
            ev("complete", "affirm diagnosis", "o1", "2024-03-02T10:30:00Z", "bob"),
        ),
    )
    trace_file(traces / "c11_nurse.jsonl", [nurse])
    full = Trace(
        "s-3",
        "Invasive Surgery",
        tuple(
            e
            for i, (label, actor, start, end) in enumerate(
                [
                    ("admit patient", "bob", "2024-03-04T08:00:00Z", "2024-03-04T08:15:00Z"),
                    ("examine patient", "alice", "2024-03-04T08:30:00Z", "2024-03-04T09:00:00Z"),
                    ("blood test", "bob", "2024-03-04T09:10:00Z", "2024-03-04T09:20:00Z"),
                    ("record vitals", "bob", "2024-03-04T09:25:00Z", "2024-03-04T09:30:00Z"),
                    ("sonography", "carol", "2024-03-04T14:00:00Z", "2024-03-04T14:30:00Z"),
                    ("affirm diagnosis", "carol", "2024-03-04T15:00:00Z", "2024-03-04T15:10:00Z"),
                    ("conduct surgery", "alice", "2024-03-05T08:00:00Z", "2024-03-05T11:00:00Z"),
                    ("discharge", "carol", "2024-03-06T12:00:00Z", "2024-03-06T12:10:00Z"),
                ],
                start=1,
            )
            for e in (
                ev("start", label, f"o{i}", start, actor, patient="p7"),
                ev("complete", label, f"o{i}", end, actor, patient="p7"),
            )
        ),
    )
    trace_file(traces / "surgery_compliant.jsonl", [full])
    lab = [
        Trace(
            f"lab-{n}",
            "Lab Analysis",
            (
                ev("start", "receive sample", "o1", f"2024-03-07T08:0{n}:00Z", "dave"),
                ev("complete", "receive sample", "o1", f"2024-03-07T08:0{n}:30Z", "dave"),
                ev("start", "centrifuge sample", "o2", f"2024-03-07T08:1{n}:00Z", "dave"),
                ev("complete", "centrifuge sample", "o2", f"2024-03-07T08:3{n}:00Z", "dave"),
                ev("start", "analyze sample", "o3", f"2024-03-07T09:0{n}:00Z", "dave"),
                ev("complete", "analyze sample", "o3", f"2024-03-07T09:1{n}:00Z", "dave"),
                ev("start", "report results", "o4", f"2024-03-07T09:3{n}:00Z", "dave"),
                ev("complete", "report results", "o4", f"2024-03-07T09:4{n}:00Z", "dave"),
            ),
        )
        for n in (1, 2)
    ]
    trace_file(traces / "lab_two_samples.jsonl", lab)

    # base hygiene
    hyg = ROOT / "hygiene"
    hyg_schemas = write_schemas(hyg / "schemas", [SURGERY, LAB])
    write(hyg / "resources.json", serialize_resource_model(RESOURCES))
    make_base(
        hyg / "contradiction",
        """\
constraint X1 {
  context process 'Invasive Surgery' all;
  on exists a is 'admit patient';
  require exists b is 'blood test' and a eventually-precedes b;
}
constraint X2 {
  context process 'Invasive Surgery' all;
  on exists a is 'admit patient';
  absent 'blood test';
}
""",
        hyg_schemas,
        repo,
    )
    make_base(
        hyg / "cycle",
        """\
constraint Y1 {
  context process 'Invasive Surgery' all;
  on exists s is 'sonography';
  require exists b is 'blood test' and b eventually-precedes s;
}
constraint Y2 {
  context process 'Invasive Surgery' all;
  on exists s is 'sonography';
  require exists b is 'blood test' and s eventually-precedes b;
}
""",
        hyg_schemas,
        repo,
    )
    make_base(hyg / "duplicate", pick(["C11"]) + "\n" + pick(["C11"]).replace("C11", "C11b"), hyg_schemas, repo)
    make_base(hyg / "centrifuge", pick(["C5", "C13"]), hyg_schemas, repo)
    make_base(hyg / "clean", CLINIC_RULES, schemas, repo)
    write_schemas(hyg / "clean_schemas", [SURGERY, LAB, TREATMENT])


if __name__ == "__main__":
    main()
