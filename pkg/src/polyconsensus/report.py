"""JSON report documents written by the command-line tool."""

from __future__ import annotations

import json
import math
from typing import Optional

import jsonschema

from .analysis import SampleAnalysis, polygon_summary
from .errors import PolyConsensusError
from .local_uncertainty import flagged_length
from .stats import ComparisonReport, summarize_cohort

SCHEMA_VERSION = "1.0"

_NUM = {"type": "number"}
_POLY = {
    "type": "object",
    "required": ["closed", "n_vertices", "vertices"],
    "properties": {
        "closed": {"type": "boolean"},
        "n_vertices": {"type": "integer", "minimum": 2},
        "perimeter": _NUM,
        "area": _NUM,
        "vertices": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
    },
}
_SUMMARY = {
    "type": "object",
    "required": ["phase", "grand_mean", "grand_std", "image_mean_std", "n_values", "per_image"],
    "properties": {
        "phase": {"type": "string"},
        "grand_mean": _NUM,
        "grand_std": _NUM,
        "image_mean_std": _NUM,
        "n_values": {"type": "integer"},
        "per_image": {"type": "array"},
    },
}

UNCERTAINTY_REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["schema_version", "kind", "sample_id", "phase", "resolution", "step", "consensus",
                 "d_B", "d_B_per_rater", "asymmetric", "cohort_summary", "warnings"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"const": "uncertainty_report"},
        "generated_at": {"type": "string"},
        "sample_id": {"type": "string"},
        "phase": {"enum": ["pre_qa", "post_qa"]},
        "resolution": {"type": "integer", "minimum": 1},
        "step": _NUM,
        "consensus": _POLY,
        "d_B": _NUM,
        "d_B_per_rater": {"type": "object", "additionalProperties": _NUM},
        "asymmetric": {"type": "object"},
        "cohort_summary": _SUMMARY,
        "mode": {
            "type": "object",
            "required": ["polygon", "objective", "mean_curve_objective"],
            "properties": {"polygon": _POLY, "objective": _NUM, "mean_curve_objective": _NUM},
        },
        "local": {
            "type": "object",
            "required": ["threshold", "window", "sigma_series", "flagged_segments", "flagged_length"],
            "properties": {
                "threshold": _NUM,
                "window": _NUM,
                "sigma_series": {"type": "array", "items": {"type": "array", "items": _NUM,
                                                           "minItems": 2, "maxItems": 2}},
                "flagged_segments": {
                    "type": "array",
                    "items": {"type": "object", "required": ["t_start", "t_end", "length", "peak_sigma"]},
                },
                "flagged_length": _NUM,
            },
        },
        "warnings": {"type": "array", "items": {"type": "string"}},
    },
}

COMPARISON_REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["schema_version", "kind", "resolution", "unit", "direction", "welch",
                 "pre_qa", "post_qa", "deltas", "warnings"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"const": "comparison_report"},
        "generated_at": {"type": "string"},
        "resolution": {"type": "integer", "minimum": 1},
        "unit": {"enum": ["pooled_rater_values", "per_image_means"]},
        "direction": {"enum": ["decrease", "increase", "none"]},
        "welch": {"type": "object", "required": ["t", "df", "p_two_sided", "alpha", "significant"]},
        "pre_qa": _SUMMARY,
        "post_qa": _SUMMARY,
        "deltas": {"type": "array"},
        "warnings": {"type": "array", "items": {"type": "string"}},
    },
}


def uncertainty_report(result: SampleAnalysis, stamp: Optional[str] = None) -> dict:
    c = result.consensus
    doc = {"schema_version": SCHEMA_VERSION, "kind": "uncertainty_report"}
    if stamp:
        doc["generated_at"] = stamp
    doc.update({
        "sample_id": result.raters.sample_id,
        "phase": result.phase,
        "resolution": int(result.resolution),
        "step": float(c.step),
        "consensus": polygon_summary(c.vertices, c.closed),
        "d_B": result.d_b,
        "d_B_per_rater": {rid: result.d_b_per_rater[rid] for rid in sorted(result.d_b_per_rater)},
        "asymmetric": {rid: result.asymmetric[rid] for rid in sorted(result.asymmetric)},
    })
    records = [(result.raters.sample_id, rid, v) for rid, v in sorted(result.d_b_per_rater.items())]
    doc["cohort_summary"] = summarize_cohort(records, result.phase).as_dict()
    if result.mode is not None:
        doc["mode"] = {
            "polygon": polygon_summary(result.mode.vertices, True),
            "objective": result.mode_objective,
            "mean_curve_objective": result.mean_objective,
        }
    if result.profile is not None:
        p = result.profile
        doc["local"] = {
            "threshold": result.threshold,
            "window": result.window,
            "perimeter": p.perimeter,
            "sigma_series": [[float(a), float(b)] for a, b in zip(p.t, p.sigma)],
            "flagged_segments": [
                {"t_start": s.t_start, "t_end": s.t_end, "length": s.length, "peak_sigma": s.peak_sigma}
                for s in result.segments
            ],
            "flagged_length": flagged_length(result.segments),
        }
    doc["warnings"] = list(result.warnings)
    return doc


def comparison_report(cmp: ComparisonReport, resolution: int, warnings=(), stamp: Optional[str] = None) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "kind": "comparison_report"}
    if stamp:
        doc["generated_at"] = stamp
    doc["resolution"] = int(resolution)
    doc.update(cmp.as_dict())
    doc["warnings"] = list(warnings) + list(cmp.pre.warnings) + list(cmp.post.warnings)
    return doc


def _check_finite(obj, path="") -> None:
    if isinstance(obj, float) and not math.isfinite(obj):
        raise PolyConsensusError(f"non-finite value at {path or '/'}")
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}/{k}")
    elif isinstance(obj, list):
        for k, v in enumerate(obj):
            _check_finite(v, f"{path}/{k}")


def dumps_report(doc: dict, schema: dict) -> str:
    """Validate against ``schema`` and serialize; any NaN or infinity is an error."""
    _check_finite(doc)
    jsonschema.validate(doc, schema)
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"
