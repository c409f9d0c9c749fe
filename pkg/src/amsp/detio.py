"""JSON-lines detection files.

One detection per line: ``{"x1": f, "y1": f, "x2": f, "y2": f, "score": f,
"class": i}`` with an optional ``"image"`` grouping key. Output lines carry
the same schema plus ``"adjusted_score"``.
"""

import json

from .errors import ContractViolation
from .nms import DetBox

_REQUIRED = ("x1", "y1", "x2", "y2", "score", "class")


def parse_detection_line(text: str, lineno: int):
    """(image_key, DetBox) from one JSONL line; errors name the line."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContractViolation(f"line {lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise ContractViolation(f"line {lineno}: expected a JSON object")
    missing = [k for k in _REQUIRED if k not in obj]
    if missing:
        raise ContractViolation(f"line {lineno}: missing keys {missing}")
    try:
        box = DetBox(
            x1=obj["x1"], y1=obj["y1"], x2=obj["x2"], y2=obj["y2"],
            score=obj["score"], class_id=obj["class"],
        )
    except (ContractViolation, TypeError) as exc:
        raise ContractViolation(f"line {lineno}: {exc}") from exc
    return obj.get("image"), box


def read_detections(path):
    """List of (image_key, DetBox) in file order; blank lines are skipped."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                out.append(parse_detection_line(line, lineno))
    return out


def detection_line(box: DetBox, adjusted_score: float, image=None) -> str:
    obj = {
        "x1": box.x1, "y1": box.y1, "x2": box.x2, "y2": box.y2,
        "score": box.score, "class": box.class_id,
        "adjusted_score": adjusted_score,
    }
    if image is not None:
        obj["image"] = image
    return json.dumps(obj)
