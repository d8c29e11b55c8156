"""Built-in serverless functions: identities, payloads, and wire types."""

from __future__ import annotations

import base64
import json
import random
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any


class WorkloadId(str, Enum):
    AUDIO_GENERATION = "audio-generation"
    FUZZY_SEARCH = "fuzzy-search"
    LANGUAGE_DETECTION = "language-detection"
    ENCRYPT_MESSAGE = "encrypt-message"
    DECRYPT_MESSAGE = "decrypt-message"
    FIBONACCI = "fibonacci"
    PRIME_NUMBERS = "prime-numbers"
    MANDELBROT_BITMAP = "mandelbrot-bitmap"

    @property
    def build_id(self) -> int:
        """Numeric id the C sources use to select the kernel."""
        return _BUILD_IDS[self]

    @property
    def high_cpu(self) -> bool:
        return True

    @property
    def high_io(self) -> bool:
        return self not in _LOW_IO

    @property
    def integer_sized(self) -> bool:
        return self in (WorkloadId.FIBONACCI, WorkloadId.PRIME_NUMBERS)

    @property
    def generator(self) -> bool:
        """Produces output of the payload size without consuming input."""
        return self in (WorkloadId.AUDIO_GENERATION, WorkloadId.MANDELBROT_BITMAP)

    @property
    def consumes_input(self) -> bool:
        return not (self.integer_sized or self.generator)

    @property
    def text_payload(self) -> bool:
        return self in (WorkloadId.FUZZY_SEARCH, WorkloadId.LANGUAGE_DETECTION)


_BUILD_IDS = {
    WorkloadId.AUDIO_GENERATION: 1,
    WorkloadId.FUZZY_SEARCH: 2,
    WorkloadId.LANGUAGE_DETECTION: 3,
    WorkloadId.ENCRYPT_MESSAGE: 4,
    WorkloadId.DECRYPT_MESSAGE: 5,
    WorkloadId.FIBONACCI: 6,
    WorkloadId.PRIME_NUMBERS: 7,
    WorkloadId.MANDELBROT_BITMAP: 8,
}

_LOW_IO = frozenset(
    {WorkloadId.ENCRYPT_MESSAGE, WorkloadId.DECRYPT_MESSAGE, WorkloadId.FIBONACCI, WorkloadId.PRIME_NUMBERS}
)

GROUPS = (1, 2, 3)
GROUP_BYTES = {1: 524288, 2: 1048576, 3: 2097152}
GROUP_INTS = {1: 10000, 2: 100000, 3: 1000000}

# Parameters every request of a workload carries unless overridden.
DEFAULT_PARAMS: dict[WorkloadId, dict[str, str]] = {
    WorkloadId.ENCRYPT_MESSAGE: {"key": "orchard"},
    WorkloadId.DECRYPT_MESSAGE: {"key": "orchard"},
    WorkloadId.FUZZY_SEARCH: {"query": "orchard", "max_dist": "2"},
}

_TEXT_ALPHABET = b"abcdefghijklmnopqrstuvwxyz      "
_TEXT_TABLE = bytes(_TEXT_ALPHABET[i % len(_TEXT_ALPHABET)] for i in range(256))


def parse_workload(value: str | WorkloadId) -> WorkloadId:
    try:
        return WorkloadId(value)
    except ValueError:
        raise ValueError(f"unknown workload {value!r}") from None


def payload_size(workload: WorkloadId | str, group: int) -> int:
    """Payload bytes, or N for the integer-sized workloads."""
    workload = parse_workload(workload)
    if group not in GROUPS:
        raise ValueError(f"payload group must be one of {GROUPS}, got {group!r}")
    return GROUP_INTS[group] if workload.integer_sized else GROUP_BYTES[group]


def generate_payload(workload: WorkloadId | str, group: int, seed: int) -> bytes | int:
    """Seeded input for one (workload, group).

    Text workloads get lowercase words separated by spaces; other byte
    workloads get uniform random bytes; integer workloads get N.
    """
    workload = parse_workload(workload)
    size = payload_size(workload, group)
    if workload.integer_sized:
        return size
    rng = random.Random(f"{workload.value}:{group}:{seed}")
    raw = rng.randbytes(size)
    if workload.text_payload:
        return raw.translate(_TEXT_TABLE)
    return raw


@dataclass(frozen=True)
class StorageRef:
    host: str
    port: int
    key: str


@dataclass
class WorkloadRequest:
    workload: WorkloadId
    group: int | None = None
    params: dict[str, str] = field(default_factory=dict)
    payload: bytes | None = None
    storage: StorageRef | None = None

    def __post_init__(self):
        self.workload = parse_workload(self.workload)
        self.params = {str(k): str(v) for k, v in self.params.items()}
        if self.workload.consumes_input and (self.payload is None) == (self.storage is None):
            raise ValueError(f"{self.workload.value} needs exactly one of payload or storage")

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"workload": self.workload.value, "group": self.group, "params": self.params}
        if self.payload is not None:
            doc["payload_b64"] = base64.b64encode(self.payload).decode("ascii")
        if self.storage is not None:
            doc["storage"] = asdict(self.storage)
        return doc

    def encode(self) -> bytes:
        return json.dumps(self.to_json(), separators=(",", ":")).encode()

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> WorkloadRequest:
        payload = doc.get("payload_b64")
        storage = doc.get("storage")
        return cls(
            workload=doc["workload"],
            group=doc.get("group"),
            params=doc.get("params") or {},
            payload=base64.b64decode(payload) if payload is not None else None,
            storage=StorageRef(**storage) if storage else None,
        )


def make_request(
    workload: WorkloadId | str,
    group: int,
    seed: int = 0,
    params: dict[str, str] | None = None,
    storage: StorageRef | None = None,
) -> WorkloadRequest:
    """Request for a payload group with the workload's default parameters.

    Input-consuming workloads carry the generated payload inline unless a
    storage reference is given; generators and integer workloads only need
    the group.
    """
    workload = parse_workload(workload)
    merged = {**DEFAULT_PARAMS.get(workload, {}), **(params or {})}
    payload = None
    if workload.consumes_input and storage is None:
        payload = generate_payload(workload, group, seed)
    return WorkloadRequest(workload, group=group, params=merged, payload=payload, storage=storage)


@dataclass
class PhaseTimings:
    io_fetch_ns: int = 0
    deserialize_ns: int = 0
    compute_ns: int = 0
    serialize_ns: int = 0
    io_store_ns: int = 0

    def total(self) -> int:
        return self.io_fetch_ns + self.deserialize_ns + self.compute_ns + self.serialize_ns + self.io_store_ns


@dataclass
class WorkloadResponse:
    status: str
    output_len: int = 0
    output_digest: str | None = None
    phases: PhaseTimings = field(default_factory=PhaseTimings)
    error_code: str | None = None
    error_message: str | None = None
    result: str | None = None
    server_total_ns: int = 0
    instance_id: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @classmethod
    def decode(cls, raw: bytes) -> WorkloadResponse:
        doc = json.loads(raw)
        err = doc.get("error") or {}
        return cls(
            status=doc["status"],
            output_len=doc.get("output_len", 0),
            output_digest=doc.get("output_digest"),
            phases=PhaseTimings(**doc.get("phases", {})),
            error_code=err.get("code"),
            error_message=err.get("message"),
            result=doc.get("result"),
            server_total_ns=doc.get("server_total_ns", 0),
            instance_id=doc.get("instance_id"),
        )


def fnv1a64(data: bytes) -> str:
    """Hex digest matching the functions' output checksum."""
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return f"{h:016x}"
