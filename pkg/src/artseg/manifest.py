"""Dataset manifests: per-patient ordered fractions with fraction 0 = simulation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ManifestError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class CaseEntry:
    patient_id: str
    fraction_index: int
    image: Path
    mask: Path | None = None  # ground truth; optional for unannotated cases

    @property
    def case_id(self) -> str:
        return f"{self.patient_id}/f{self.fraction_index}"


@dataclass
class DatasetManifest:
    cases: list = field(default_factory=list)
    root: Path = Path(".")
    format_version: int = FORMAT_VERSION

    def by_patient(self) -> dict:
        out: dict[str, list] = {}
        for c in self.cases:
            out.setdefault(c.patient_id, []).append(c)
        for entries in out.values():
            entries.sort(key=lambda c: c.fraction_index)
        return out

    def validate(self, check_paths: bool = True):
        if self.format_version != FORMAT_VERSION:
            raise ManifestError(
                f"unsupported manifest format_version {self.format_version}"
            )
        for patient, entries in self.by_patient().items():
            indices = [c.fraction_index for c in entries]
            if indices != list(range(len(indices))):
                raise ManifestError(
                    f"patient {patient}: fraction indices {indices} are not "
                    "contiguous from 0"
                )
        if check_paths:
            for c in self.cases:
                if not Path(c.image).is_file():
                    raise ManifestError(f"{c.case_id}: missing image {c.image}")
                if c.mask is not None and not Path(c.mask).is_file():
                    raise ManifestError(f"{c.case_id}: missing mask {c.mask}")
        return self

    def to_dict(self):
        def rel(p):
            if p is None:
                return None
            try:
                return str(Path(p).relative_to(self.root))
            except ValueError:
                return str(p)

        return {
            "format_version": self.format_version,
            "root": ".",
            "cases": [
                {
                    "patient_id": c.patient_id,
                    "fraction_index": c.fraction_index,
                    "current_image": rel(c.image),
                    "current_mask": rel(c.mask),
                }
                for c in sorted(
                    self.cases, key=lambda c: (c.patient_id, c.fraction_index)
                )
            ],
        }

    def save(self, path):
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ManifestError(f"cannot read manifest {path}: {e}") from e
        root = path.parent / doc.get("root", ".")
        cases = []
        for entry in doc.get("cases", []):
            try:
                mask = entry.get("current_mask")
                cases.append(
                    CaseEntry(
                        patient_id=str(entry["patient_id"]),
                        fraction_index=int(entry["fraction_index"]),
                        image=(root / entry["current_image"]).resolve(),
                        mask=(root / mask).resolve() if mask else None,
                    )
                )
            except KeyError as e:
                raise ManifestError(f"manifest entry missing field {e}") from e
        m = cls(
            cases=cases,
            root=root.resolve(),
            format_version=int(doc.get("format_version", -1)),
        )
        return m
