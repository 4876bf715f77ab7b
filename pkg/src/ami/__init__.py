"""Engine for converting insect camera-trap imagery into tracked,
species-level moth occurrence records.

Subpackages and modules:

- ``taxonomy``  — checklist reconciliation against a taxonomy backbone,
  lineage lookup, and confidence rollup to genus/family.
- ``dwca``      — Darwin Core Archive parsing, media fetching/cleaning,
  and capped training-set export.
- ``synthgen``  — synthetic detection scenes from reviewed crops.
- ``inference`` — staged detector / binary / species pipeline over
  pluggable model backends.
- ``tracking``  — four-factor assignment cost, optimal gated matching,
  and per-session individual counts.
- ``pipeline``  — session discovery and the fault-tolerant job queue.
- ``service``   — HTTP/JSON API over the engine's stores.
"""

__version__ = "0.1.0"
