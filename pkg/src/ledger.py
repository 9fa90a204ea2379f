"""
Constants Ledger Module

Records every constant a run fixes, measures or calibrates, together with
the constants it depends on. Insertion order defines the dependency order:
a constant may only depend on constants recorded before it, so the ledger
is acyclic by construction and a violation is reported as a contract error.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from src.errors import ContractViolation, ParameterError

logger = logging.getLogger(__name__)

PROVENANCES = ("fixed", "measured", "calibrated")


@dataclass(frozen=True)
class LedgerEntry:
    name: str
    value: float
    provenance: str
    depends_on: tuple = ()
    note: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "value": self.value,
            "provenance": self.provenance,
            "depends_on": list(self.depends_on),
            "note": self.note,
        }


@dataclass
class ConstantsLedger:
    """Ordered, acyclic record of named constants.

    Example:
        >>> ledger = ConstantsLedger()
        >>> ledger.record("eta-net", 0.25, "fixed")
        >>> ledger.record("N", 4, "fixed", depends_on=["eta-net"])
        >>> ledger["N"]
        4.0
    """

    entries: List[LedgerEntry] = field(default_factory=list)

    def __contains__(self, name: str) -> bool:
        return any(e.name == name for e in self.entries)

    def __getitem__(self, name: str) -> float:
        entry = self.get(name)
        if entry is None:
            raise KeyError(name)
        return entry.value

    def get(self, name: str) -> Optional[LedgerEntry]:
        for entry in self.entries:
            if entry.name == name:
                return entry
        return None

    def record(
        self,
        name: str,
        value: float,
        provenance: str,
        depends_on: Sequence[str] = (),
        note: str = "",
    ) -> None:
        """Append a constant, or refresh one whose dependencies are unchanged.

        Raises:
            ParameterError: Unknown provenance
            ContractViolation: A dependency is missing, self-referential or
                recorded after ``name``
        """
        if provenance not in PROVENANCES:
            raise ParameterError("unknown provenance", provenance=provenance)
        names = [e.name for e in self.entries]
        position = names.index(name) if name in names else len(names)
        for dep in depends_on:
            if dep == name or dep not in names or names.index(dep) >= position:
                logger.error(f"Ledger dependency {dep} of {name} breaks the order")
                raise ContractViolation(
                    "constant depends on a later or unknown constant",
                    name=name,
                    dependency=dep,
                )
        entry = LedgerEntry(name, float(value), provenance, tuple(depends_on), note)
        if position < len(names):
            self.entries[position] = entry
        else:
            self.entries.append(entry)
        logger.debug(f"Ledger {provenance} {name} = {value:.6g}")

    def merge(self, other: "ConstantsLedger") -> None:
        for entry in other.entries:
            known = [d for d in entry.depends_on if d in self]
            self.record(entry.name, entry.value, entry.provenance, known, entry.note)

    def to_dict(self) -> Dict[str, Any]:
        return {"constants": [e.to_dict() for e in self.entries]}

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {**e.to_dict(), "depends_on": ";".join(e.depends_on)} for e in self.entries
        ]
        return pd.DataFrame(rows, columns=["name", "value", "provenance", "depends_on", "note"])
