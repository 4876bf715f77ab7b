#!/usr/bin/env python3
"""Reconciling a messy regional species list against a backbone snapshot.

Walks through the full checklist flow: load a backbone, normalize raw
names (synonyms, duplicates, typos, unknowns), and write the processed
checklist CSV that the training-set exporter consumes.
"""

import tempfile
from pathlib import Path

from ami.taxonomy import (
    Backbone,
    Rank,
    Status,
    TaxonRecord,
    normalize_checklist,
    rollup,
    write_processed_checklist,
)

# A miniature backbone: two families, two genera, four species, one synonym.
backbone = Backbone.from_records(
    [
        TaxonRecord(300, "Saturniidae", Rank.FAMILY, Status.ACCEPTED),
        TaxonRecord(200, "Actias", Rank.GENUS, Status.ACCEPTED, parent_key=300),
        TaxonRecord(1, "Actias luna", Rank.SPECIES, Status.ACCEPTED, parent_key=200),
        TaxonRecord(2, "Phalaena luna", Rank.SPECIES, Status.SYNONYM, accepted_key=1),
        TaxonRecord(3, "Actias selene", Rank.SPECIES, Status.ACCEPTED, parent_key=200),
        TaxonRecord(301, "Erebidae", Rank.FAMILY, Status.ACCEPTED),
        TaxonRecord(201, "Catocala", Rank.GENUS, Status.ACCEPTED, parent_key=301),
        TaxonRecord(4, "Catocala ilia", Rank.SPECIES, Status.ACCEPTED, parent_key=201),
    ]
)

# Raw names as they arrive from partners: authorship strings, a synonym
# that duplicates an accepted name, a typo, and an unknown.
raw_names = [
    "Actias luna (Linnaeus, 1758)",
    "Phalaena luna",
    "Actias selene",   # one edit away from "Actias selene"? no - exact
    "Actias selena",   # typo: flagged fuzzy for review, never auto-resolved
    "Catocala ilia Cramer, 1776",
    "Totally unknown moth",
]

entries = normalize_checklist(raw_names, backbone, fuzzy_threshold=0.9)
for entry in entries:
    key = f" -> taxon {entry.resolved_key}" if entry.resolved_key else ""
    note = f"  ({entry.note})" if entry.note else ""
    print(f"{entry.input_name:35s} {entry.resolution.value:18s}{key}{note}")

out = Path(tempfile.mkdtemp()) / "processed_checklist.csv"
write_processed_checklist(entries, backbone, out)
print(f"\nprocessed checklist written to {out}")

# The same lineage machinery rolls species confidence up to higher taxa.
species_probs = {1: 0.55, 3: 0.25, 4: 0.20}
print("\ngenus rollup: ", rollup(species_probs, backbone, Rank.GENUS))
print("family rollup:", rollup(species_probs, backbone, Rank.FAMILY))
