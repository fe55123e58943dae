"""Off-chain valuation of captured progress against a schedule of values.

Money is integer wei throughout. Percentages are parsed as exact decimals and
the cumulative earned value of a scope is ``floor(scheduled * pct / 100)``;
what is due this cycle is whatever that exceeds the amount already settled.
"""

from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Optional

import yaml

from .cas import Cid
from .encoding import canonical_json
from .errors import (
    DuplicateGuid,
    MissingPayee,
    ParseError,
    RangeError,
    UnknownCostCode,
)

PER_ELEMENT = "element"
AGGREGATE = "aggregate"

_GRANULARITY_ALIASES = {
    "element": PER_ELEMENT,
    "per_element": PER_ELEMENT,
    "perelement": PER_ELEMENT,
    "high": PER_ELEMENT,
    "aggregate": AGGREGATE,
    "low": AGGREGATE,
}

ELEMENT_COLUMNS = ("guid", "cost_code", "quantity", "unit", "unit_value_wei", "percent_complete")
AGGREGATE_COLUMNS = ("cost_code", "percent_complete")
SOV_COLUMNS = ("cost_code", "scheduled_value_wei", "payee_address")


@dataclass(frozen=True)
class ElementRecord:
    guid: str
    cost_code: str
    quantity: Decimal
    unit: str
    unit_value: int
    percent_complete: Decimal

    @property
    def scheduled_value(self) -> int:
        return int(Fraction(self.quantity) * self.unit_value)


@dataclass(frozen=True)
class ScopeProgress:
    cost_code: str
    percent_complete: Decimal


@dataclass(frozen=True)
class ProgressCapture:
    project: str
    cycle_id: int
    granularity: str
    elements: tuple = ()
    scopes: tuple = ()
    raw_progress: bytes = b""
    as_built_bim: Optional[bytes] = None
    analysis_tool: bytes = b""

    def element_list(self) -> bytes:
        """Canonical text of the captured rows; this is what CidBundle.elements addresses."""
        lines = []
        if self.granularity == PER_ELEMENT:
            lines.append(", ".join(ELEMENT_COLUMNS))
            for e in self.elements:
                lines.append(", ".join([e.guid, e.cost_code, str(e.quantity), e.unit,
                                        str(e.unit_value), str(e.percent_complete)]))
        else:
            lines.append(", ".join(AGGREGATE_COLUMNS))
            for s in self.scopes:
                lines.append(f"{s.cost_code}, {s.percent_complete}")
        return ("\n".join(lines) + "\n").encode()

    def scope_rows(self):
        """Yield ``(scope_key, cost_code, scheduled_override, pct)`` in capture order."""
        if self.granularity == PER_ELEMENT:
            for e in self.elements:
                yield e.guid, e.cost_code, e.scheduled_value, e.percent_complete
        else:
            for s in self.scopes:
                yield s.cost_code, s.cost_code, None, s.percent_complete


@dataclass
class ScheduleOfValues:
    entries: dict = field(default_factory=dict)      # cost_code -> wei
    payee_map: dict = field(default_factory=dict)    # cost_code -> address

    def add(self, cost_code, scheduled_value, payee=None):
        if not isinstance(scheduled_value, int) or scheduled_value < 0:
            raise RangeError(f"{cost_code}: scheduled value must be a non-negative integer")
        self.entries[cost_code] = scheduled_value
        if payee:
            self.payee_map[cost_code] = payee
        return self

    def payee(self, cost_code):
        if cost_code not in self.entries:
            raise UnknownCostCode(cost_code)
        payee = self.payee_map.get(cost_code)
        if not payee:
            raise MissingPayee(cost_code)
        return payee

    def to_document(self) -> bytes:
        lines = [", ".join(SOV_COLUMNS)]
        for code in sorted(self.entries):
            lines.append(f"{code}, {self.entries[code]}, {self.payee_map.get(code, '')}")
        return ("\n".join(lines) + "\n").encode()


@dataclass
class PaidLedger:
    """Cumulative settled value per scope key, advanced only on finality."""

    cumulative_paid: dict = field(default_factory=dict)
    modes: dict = field(default_factory=dict)   # cost_code -> granularity
    last_cycle: int = 0

    def paid(self, key) -> int:
        return self.cumulative_paid.get(key, 0)

    def check_capture(self, capture):
        for _, code, _, _ in capture.scope_rows():
            mode = self.modes.get(code)
            if mode is not None and mode != capture.granularity:
                raise ParseError(f"cost code {code} already settled in {mode} mode")

    def advance(self, instruction, cycle_id=None):
        for code in instruction.cost_codes:
            self.modes.setdefault(code, instruction.granularity)
        for key, amount in instruction.dues:
            self.cumulative_paid[key] = self.paid(key) + amount
        if cycle_id is not None:
            self.last_cycle = max(self.last_cycle, cycle_id)


@dataclass(frozen=True)
class CidBundle:
    elements: Cid
    schedule_of_values: Cid
    raw_progress: Cid
    analysis_tool: Cid
    as_built_bim: Optional[Cid] = None

    def to_json(self):
        out = {
            "elements": self.elements.text,
            "schedule_of_values": self.schedule_of_values.text,
            "raw_progress": self.raw_progress.text,
            "analysis_tool": self.analysis_tool.text,
        }
        if self.as_built_bim is not None:
            out["as_built_bim"] = self.as_built_bim.text
        return out

    @classmethod
    def from_json(cls, obj):
        bim = obj.get("as_built_bim")
        return cls(
            elements=Cid.parse(obj["elements"]),
            schedule_of_values=Cid.parse(obj["schedule_of_values"]),
            raw_progress=Cid.parse(obj["raw_progress"]),
            analysis_tool=Cid.parse(obj["analysis_tool"]),
            as_built_bim=Cid.parse(bim) if bim else None,
        )

    def cids(self):
        return [c for c in (self.elements, self.as_built_bim, self.schedule_of_values,
                            self.raw_progress, self.analysis_tool) if c is not None]


@dataclass(frozen=True)
class PaymentInstruction:
    payee: str
    amount: int
    dues: tuple            # ((scope_key, wei), ...) in capture order
    cid_bundle: Optional[CidBundle]
    granularity: str = AGGREGATE
    cost_codes: tuple = ()

    @property
    def scope_keys(self):
        return [k for k, _ in self.dues]

    def with_bundle(self, bundle):
        return PaymentInstruction(self.payee, self.amount, self.dues, bundle,
                                  self.granularity, self.cost_codes)

    def to_json(self):
        return {
            "payee": self.payee,
            "amount": self.amount,
            "scope": self.scope_keys,
            "bundle": self.cid_bundle.to_json() if self.cid_bundle else None,
        }


# -- ingestion ---------------------------------------------------------------

def _decimal(value, what):
    if isinstance(value, float):
        value = repr(value)
    try:
        d = Decimal(str(value).strip())
    except InvalidOperation:
        raise ParseError(f"{what}: not a number: {value!r}") from None
    if not d.is_finite():
        raise ParseError(f"{what}: not a finite number: {value!r}")
    return d


def _integer(value, what):
    if isinstance(value, bool):
        raise ParseError(f"{what}: not an integer: {value!r}")
    if isinstance(value, int):
        return value
    try:
        return int(str(value).strip())
    except ValueError:
        raise ParseError(f"{what}: not an integer: {value!r}") from None


def _pct(value, what):
    pct = _decimal(value, what)
    if pct < 0 or pct > 100:
        raise RangeError(f"{what}: percent_complete {pct} outside [0, 100]")
    return pct


def _row(row, columns, what):
    """Accept a mapping, a list, or a comma-separated string."""
    if isinstance(row, dict):
        missing = [c for c in columns if c not in row]
        if missing:
            raise ParseError(f"{what}: missing columns {missing}")
        return [row[c] for c in columns]
    if isinstance(row, str):
        row = [part.strip() for part in row.split(",")]
    if not isinstance(row, (list, tuple)) or len(row) != len(columns):
        raise ParseError(f"{what}: expected {len(columns)} columns {columns}, got {row!r}")
    return list(row)


def _load(source):
    if isinstance(source, dict):
        return source
    if isinstance(source, bytes):
        source = source.decode()
    try:
        doc = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        raise ParseError(f"capture is not valid structured text: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("capture document must be a mapping")
    return doc


def _artifact(value):
    if value is None:
        return None
    if isinstance(value, bytes):
        return value
    return str(value).encode()


def ingest_capture(source) -> ProgressCapture:
    """Parse and validate one capture document (YAML text or an equivalent mapping)."""
    doc = _load(source)
    for key in ("project", "cycle", "granularity"):
        if key not in doc:
            raise ParseError(f"capture header missing {key!r}")
    cycle = _integer(doc["cycle"], "cycle")
    if cycle < 0:
        raise ParseError("cycle must be non-negative")
    gran = _GRANULARITY_ALIASES.get(str(doc["granularity"]).strip().lower())
    if gran is None:
        raise ParseError(f"unknown granularity {doc['granularity']!r}")

    elements, scopes = [], []
    if gran == PER_ELEMENT:
        if doc.get("scopes"):
            raise ParseError("element capture must not carry aggregate scopes")
        seen = set()
        for i, row in enumerate(doc.get("elements") or []):
            guid, code, qty, unit, unit_value, pct = _row(row, ELEMENT_COLUMNS, f"element row {i}")
            guid, code = str(guid).strip(), str(code).strip()
            if not guid or not code:
                raise ParseError(f"element row {i}: empty guid or cost_code")
            if guid in seen:
                raise DuplicateGuid(guid)
            seen.add(guid)
            quantity = _decimal(qty, f"{guid} quantity")
            value = _integer(unit_value, f"{guid} unit_value_wei")
            if quantity < 0 or value < 0:
                raise RangeError(f"{guid}: quantity and unit value must be non-negative")
            elements.append(ElementRecord(guid, code, quantity, str(unit).strip(), value,
                                          _pct(pct, guid)))
    else:
        if doc.get("elements"):
            raise ParseError("aggregate capture must not carry element rows")
        seen = set()
        for i, row in enumerate(doc.get("scopes") or []):
            code, pct = _row(row, AGGREGATE_COLUMNS, f"scope row {i}")
            code = str(code).strip()
            if code in seen:
                raise ParseError(f"cost code {code} listed twice")
            seen.add(code)
            scopes.append(ScopeProgress(code, _pct(pct, code)))

    art = doc.get("artifacts") or {}
    if not isinstance(art, dict):
        raise ParseError("artifacts must be a mapping")
    raw = _artifact(art.get("raw_progress"))
    if raw is None:
        raw = canonical_json({k: v for k, v in doc.items() if k != "artifacts"}, default=str)
    return ProgressCapture(
        project=str(doc["project"]),
        cycle_id=cycle,
        granularity=gran,
        elements=tuple(elements),
        scopes=tuple(scopes),
        raw_progress=raw,
        as_built_bim=_artifact(art.get("as_built_bim")),
        analysis_tool=_artifact(art.get("analysis_tool")) or b"unspecified",
    )


def parse_schedule_of_values(source) -> ScheduleOfValues:
    """Rows of ``cost_code, scheduled_value_wei, payee_address``.

    Accepts a YAML document with a ``rows`` list, a bare YAML list, or the
    comma-separated text produced by :meth:`ScheduleOfValues.to_document`.
    """
    if isinstance(source, bytes):
        source = source.decode()
    rows = source
    if isinstance(source, str):
        lines = [ln for ln in source.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if lines and lines[0].replace(" ", "") == ",".join(SOV_COLUMNS):
            rows = [ln for ln in lines[1:]]
        else:
            try:
                rows = yaml.safe_load(source)
            except yaml.YAMLError as exc:
                raise ParseError(f"schedule of values: {exc}") from None
    if isinstance(rows, dict):
        rows = rows.get("rows", [])
    if not isinstance(rows, list):
        raise ParseError("schedule of values must be a list of rows")
    sov = ScheduleOfValues()
    for i, row in enumerate(rows):
        if isinstance(row, str):
            parts = [p.strip() for p in row.split(",")]
            if len(parts) == 2:
                parts.append("")
            row = parts
        code, value, payee = _row(row, SOV_COLUMNS, f"sov row {i}")
        code = str(code).strip()
        if code in sov.entries:
            raise ParseError(f"cost code {code} scheduled twice")
        sov.add(code, _integer(value, f"{code} scheduled_value_wei"), str(payee or "").strip() or None)
    return sov


# -- valuation ---------------------------------------------------------------

def earned_value(scheduled: int, pct: Decimal) -> int:
    """floor(scheduled * pct / 100), exact."""
    return (Fraction(scheduled) * Fraction(pct) / 100).__floor__()


def value_due(capture: ProgressCapture, sov: ScheduleOfValues, paid: PaidLedger):
    """Dues for this capture, grouped by payee in order of first appearance.

    ``paid`` is read, never written; the returned instructions have no
    CidBundle until :func:`publish_bundle` output is attached.
    """
    paid.check_capture(capture)
    by_payee = {}
    for key, code, override, pct in capture.scope_rows():
        payee = sov.payee(code)
        scheduled = override if override is not None else sov.entries[code]
        due = earned_value(scheduled, pct) - paid.paid(key)
        if due <= 0:
            continue
        dues, codes = by_payee.setdefault(payee, ([], []))
        dues.append((key, due))
        if code not in codes:
            codes.append(code)
    return [
        PaymentInstruction(payee, sum(a for _, a in dues), tuple(dues), None,
                           capture.granularity, tuple(codes))
        for payee, (dues, codes) in by_payee.items()
    ]


def publish_bundle(capture: ProgressCapture, sov: ScheduleOfValues, store) -> CidBundle:
    return CidBundle(
        elements=store.put(capture.element_list()),
        schedule_of_values=store.put(sov.to_document()),
        raw_progress=store.put(capture.raw_progress),
        analysis_tool=store.put(capture.analysis_tool),
        as_built_bim=store.put(capture.as_built_bim) if capture.as_built_bim is not None else None,
    )
