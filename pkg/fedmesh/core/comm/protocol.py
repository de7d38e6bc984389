"""
Binary wire protocol of the federation. Every message travels as one frame:

    magic "FKBP" | version u8 | msg_type u8 | payload_len u32 | payload

All integers and floats are little-endian. Payload fields follow the declaration order of the message dataclasses;
strings are a u16 byte length plus UTF-8, lists a u32 count plus elements and parameter vectors use the checkpoint
encoding. Decoding is strict, so encode(decode(frame)) == frame for every accepted frame.
"""
import math
import struct
from dataclasses import dataclass, fields
from enum import IntEnum
from typing import ClassVar, Dict, Optional, Tuple, Type, Union

from fedmesh.nets.util.parameters import ParameterError, ParameterVector, decode_params_from, encode_params

MAGIC = b'FKBP'
VERSION = 1
MAX_PAYLOAD = 256 * 1024 * 1024

HEADER = struct.Struct('<4sBBI')
HEADER_SIZE = HEADER.size

_U8 = struct.Struct('<B')
_U16 = struct.Struct('<H')
_U32 = struct.Struct('<I')
_U64 = struct.Struct('<Q')
_F64 = struct.Struct('<d')

# Smallest encoded plan entry: site_id, empty host, port, role and an absent peer.
_MIN_PLAN_ENTRY = _U64.size + _U16.size + _U16.size + _U8.size + _U8.size


class ProtocolError(Exception):
    """
    Base of all wire-level failures.
    """


class BadMagicError(ProtocolError):
    pass


class UnsupportedVersionError(ProtocolError):
    pass


class UnknownMessageTypeError(ProtocolError):
    pass


class TruncatedFrameError(ProtocolError):
    pass


class OversizePayloadError(ProtocolError):
    pass


class TrailingBytesError(ProtocolError):
    pass


class MalformedPayloadError(ProtocolError):
    """
    Payload bytes that parse but violate a field invariant, such as a boolean byte other than 0 or 1.
    """


class ConnectionClosedError(ProtocolError):
    """
    The peer closed the stream before a complete frame arrived.
    """


class FrameTimeoutError(ProtocolError):
    pass


class MessageType(IntEnum):
    REGISTER = 1
    STATUS_UPDATE = 2
    ROUND_PLAN = 3
    SUBMIT_UPDATE = 4
    GLOBAL_MODEL = 5
    MODEL_TRANSFER = 6
    SHUTDOWN = 7


class Role(IntEnum):
    IDLE = 0
    SENDER = 1
    RECEIVER = 2


class _Writer:

    def __init__(self):
        self.buffer = bytearray()

    def u8(self, value: int):
        self.buffer += _U8.pack(value)

    def u16(self, value: int):
        self.buffer += _U16.pack(value)

    def u32(self, value: int):
        self.buffer += _U32.pack(value)

    def u64(self, value: int):
        self.buffer += _U64.pack(value)

    def f64(self, value: float):
        self.buffer += _F64.pack(value)

    def boolean(self, value: bool):
        self.u8(1 if value else 0)

    def string(self, value: str):
        raw = value.encode('utf-8')
        if len(raw) > 0xFFFF:
            raise ValueError(f'string of {len(raw)} bytes exceeds the 65535 byte limit')
        self.u16(len(raw))
        self.buffer += raw

    def params(self, value: ParameterVector):
        self.buffer += encode_params(value)


class _Reader:

    def __init__(self, payload: memoryview):
        self.view = payload
        self.offset = 0

    @property
    def remaining(self) -> int:
        return len(self.view) - self.offset

    def _take(self, layout: struct.Struct):
        if self.remaining < layout.size:
            raise TruncatedFrameError(f'payload ends {layout.size - self.remaining} bytes early')
        (value,) = layout.unpack_from(self.view, self.offset)
        self.offset += layout.size
        return value

    def u8(self) -> int:
        return self._take(_U8)

    def u16(self) -> int:
        return self._take(_U16)

    def u32(self) -> int:
        return self._take(_U32)

    def u64(self) -> int:
        return self._take(_U64)

    def f64(self) -> float:
        return self._take(_F64)

    def boolean(self) -> bool:
        value = self.u8()
        if value not in (0, 1):
            raise MalformedPayloadError(f'boolean byte must be 0 or 1, got {value}')
        return value == 1

    def string(self) -> str:
        length = self.u16()
        if self.remaining < length:
            raise TruncatedFrameError(f'string of {length} bytes but only {self.remaining} remain')
        raw = bytes(self.view[self.offset:self.offset + length])
        self.offset += length
        try:
            return raw.decode('utf-8')
        except UnicodeDecodeError as error:
            raise MalformedPayloadError(f'invalid UTF-8 string: {error}') from error

    def params(self) -> ParameterVector:
        try:
            vector, self.offset = decode_params_from(self.view, self.offset, checked=False)
        except ParameterError as error:
            raise TruncatedFrameError(str(error)) from error
        if not vector.is_finite():
            raise MalformedPayloadError('parameter vector contains non-finite values')
        return vector


def _check_uint(name: str, value: int, bits: int):
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 2 ** bits:
        raise ValueError(f'{name} must be an unsigned {bits}-bit integer, got {value!r}')


def _check_finite(name: str, value: float):
    if not math.isfinite(value):
        raise ValueError(f'{name} must be finite, got {value}')


class WireMessage:
    """
    Base of the message variants. Subclasses are frozen dataclasses declaring their type code and payload codec.
    """
    TYPE: ClassVar[MessageType]

    def encode_payload(self, writer: _Writer) -> None:
        raise NotImplementedError

    @classmethod
    def decode_payload(cls, reader: _Reader) -> 'WireMessage':
        raise NotImplementedError

    @property
    def carries_params(self) -> bool:
        return any(isinstance(getattr(self, item.name), ParameterVector) for item in fields(self))


@dataclass(frozen=True)
class Register(WireMessage):
    TYPE: ClassVar[MessageType] = MessageType.REGISTER
    site_id: int
    listen_host: str
    listen_port: int
    case_count: int

    def __post_init__(self):
        _check_uint('site_id', self.site_id, 64)
        _check_uint('listen_port', self.listen_port, 16)
        _check_uint('case_count', self.case_count, 64)

    def encode_payload(self, writer: _Writer) -> None:
        writer.u64(self.site_id)
        writer.string(self.listen_host)
        writer.u16(self.listen_port)
        writer.u64(self.case_count)

    @classmethod
    def decode_payload(cls, reader: _Reader) -> 'Register':
        return cls(reader.u64(), reader.string(), reader.u16(), reader.u64())


@dataclass(frozen=True)
class StatusUpdate(WireMessage):
    TYPE: ClassVar[MessageType] = MessageType.STATUS_UPDATE
    site_id: int
    round: int
    active: bool
    validation_loss: float

    def __post_init__(self):
        _check_uint('site_id', self.site_id, 64)
        _check_uint('round', self.round, 64)
        if not isinstance(self.active, bool):
            raise ValueError(f'active must be a bool, got {self.active!r}')
        _check_finite('validation_loss', self.validation_loss)

    def encode_payload(self, writer: _Writer) -> None:
        writer.u64(self.site_id)
        writer.u64(self.round)
        writer.boolean(self.active)
        writer.f64(self.validation_loss)

    @classmethod
    def decode_payload(cls, reader: _Reader) -> 'StatusUpdate':
        return cls(reader.u64(), reader.u64(), reader.boolean(), reader.f64())


@dataclass(frozen=True)
class PlanEntry:
    site_id: int
    host: str
    port: int
    role: Role
    peer_id: Optional[int] = None

    def __post_init__(self):
        _check_uint('site_id', self.site_id, 64)
        _check_uint('port', self.port, 16)
        object.__setattr__(self, 'role', Role(self.role))
        if self.role is Role.IDLE:
            if self.peer_id is not None:
                raise ValueError(f'IDLE entry of site {self.site_id} carries peer {self.peer_id}')
        else:
            if self.peer_id is None:
                raise ValueError(f'{self.role.name} entry of site {self.site_id} needs a peer')
            _check_uint('peer_id', self.peer_id, 64)
            if self.peer_id == self.site_id:
                raise ValueError(f'site {self.site_id} cannot be paired with itself')

    @property
    def address(self) -> Tuple[str, int]:
        return self.host, self.port

    def encode(self, writer: _Writer) -> None:
        writer.u64(self.site_id)
        writer.string(self.host)
        writer.u16(self.port)
        writer.u8(int(self.role))
        writer.boolean(self.peer_id is not None)
        if self.peer_id is not None:
            writer.u64(self.peer_id)

    @classmethod
    def decode(cls, reader: _Reader) -> 'PlanEntry':
        site_id, host, port, role_code = reader.u64(), reader.string(), reader.u16(), reader.u8()
        try:
            role = Role(role_code)
        except ValueError:
            raise MalformedPayloadError(f'unknown role code {role_code}') from None
        peer_id = reader.u64() if reader.boolean() else None
        return cls(site_id, host, port, role, peer_id)


@dataclass(frozen=True)
class RoundPlan(WireMessage):
    TYPE: ClassVar[MessageType] = MessageType.ROUND_PLAN
    round: int
    entries: Tuple[PlanEntry, ...] = ()

    def __post_init__(self):
        _check_uint('round', self.round, 64)
        object.__setattr__(self, 'entries', tuple(self.entries))
        ids = [entry.site_id for entry in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f'round plan lists a site twice: {ids}')

    def entry_for(self, site_id: int) -> Optional[PlanEntry]:
        for entry in self.entries:
            if entry.site_id == site_id:
                return entry
        return None

    def encode_payload(self, writer: _Writer) -> None:
        writer.u64(self.round)
        writer.u32(len(self.entries))
        for entry in self.entries:
            entry.encode(writer)

    @classmethod
    def decode_payload(cls, reader: _Reader) -> 'RoundPlan':
        round_id = reader.u64()
        count = reader.u32()
        # Bound the count by the bytes left before building anything.
        if count * _MIN_PLAN_ENTRY > reader.remaining:
            raise TruncatedFrameError(f'{count} plan entries cannot fit in {reader.remaining} bytes')
        return cls(round_id, tuple(PlanEntry.decode(reader) for _ in range(count)))


@dataclass(frozen=True)
class SubmitUpdate(WireMessage):
    TYPE: ClassVar[MessageType] = MessageType.SUBMIT_UPDATE
    site_id: int
    round: int
    case_count: int
    params: ParameterVector

    def __post_init__(self):
        _check_uint('site_id', self.site_id, 64)
        _check_uint('round', self.round, 64)
        _check_uint('case_count', self.case_count, 64)
        if self.case_count < 1:
            raise ValueError('case_count must be at least 1')
        if not self.params.is_finite():
            raise ValueError('params must be finite')

    def encode_payload(self, writer: _Writer) -> None:
        writer.u64(self.site_id)
        writer.u64(self.round)
        writer.u64(self.case_count)
        writer.params(self.params)

    @classmethod
    def decode_payload(cls, reader: _Reader) -> 'SubmitUpdate':
        return cls(reader.u64(), reader.u64(), reader.u64(), reader.params())


@dataclass(frozen=True)
class GlobalModel(WireMessage):
    TYPE: ClassVar[MessageType] = MessageType.GLOBAL_MODEL
    round: int
    params: ParameterVector

    def __post_init__(self):
        _check_uint('round', self.round, 64)
        if not self.params.is_finite():
            raise ValueError('params must be finite')

    def encode_payload(self, writer: _Writer) -> None:
        writer.u64(self.round)
        writer.params(self.params)

    @classmethod
    def decode_payload(cls, reader: _Reader) -> 'GlobalModel':
        return cls(reader.u64(), reader.params())


@dataclass(frozen=True)
class ModelTransfer(WireMessage):
    TYPE: ClassVar[MessageType] = MessageType.MODEL_TRANSFER
    round: int
    sender_id: int
    validation_loss: float
    params: ParameterVector

    def __post_init__(self):
        _check_uint('round', self.round, 64)
        _check_uint('sender_id', self.sender_id, 64)
        _check_finite('validation_loss', self.validation_loss)
        if not self.params.is_finite():
            raise ValueError('params must be finite')

    def encode_payload(self, writer: _Writer) -> None:
        writer.u64(self.round)
        writer.u64(self.sender_id)
        writer.f64(self.validation_loss)
        writer.params(self.params)

    @classmethod
    def decode_payload(cls, reader: _Reader) -> 'ModelTransfer':
        return cls(reader.u64(), reader.u64(), reader.f64(), reader.params())


@dataclass(frozen=True)
class Shutdown(WireMessage):
    TYPE: ClassVar[MessageType] = MessageType.SHUTDOWN
    reason: str = ''

    def encode_payload(self, writer: _Writer) -> None:
        writer.string(self.reason)

    @classmethod
    def decode_payload(cls, reader: _Reader) -> 'Shutdown':
        return cls(reader.string())


MESSAGE_TYPES: Dict[MessageType, Type[WireMessage]] = {
    message_class.TYPE: message_class
    for message_class in (Register, StatusUpdate, RoundPlan, SubmitUpdate, GlobalModel, ModelTransfer, Shutdown)
}


def encode_message(message: WireMessage) -> bytes:
    """
    Encode a message into one complete frame.
    @param message: Message to encode.
    @type message: WireMessage
    @return: Header and payload bytes.
    @rtype: bytes
    """
    writer = _Writer()
    message.encode_payload(writer)
    if len(writer.buffer) > MAX_PAYLOAD:
        raise OversizePayloadError(f'payload of {len(writer.buffer)} bytes exceeds {MAX_PAYLOAD}')
    return HEADER.pack(MAGIC, VERSION, int(message.TYPE), len(writer.buffer)) + bytes(writer.buffer)


def decode_header(header: Union[bytes, bytearray, memoryview]) -> Tuple[MessageType, int]:
    """
    Validate a frame header and return its message type and payload length. Frames are rejected here, before any
    payload byte is read.
    """
    if len(header) < HEADER_SIZE:
        raise TruncatedFrameError(f'frame header needs {HEADER_SIZE} bytes, got {len(header)}')
    magic, version, type_code, payload_len = HEADER.unpack_from(header, 0)
    if magic != MAGIC:
        raise BadMagicError(f'bad magic {bytes(magic)!r}, expected {MAGIC!r}')
    if version != VERSION:
        raise UnsupportedVersionError(f'protocol version {version} is not supported, expected {VERSION}')
    try:
        message_type = MessageType(type_code)
    except ValueError:
        raise UnknownMessageTypeError(f'unknown message type {type_code}') from None
    if payload_len > MAX_PAYLOAD:
        raise OversizePayloadError(f'declared payload of {payload_len} bytes exceeds {MAX_PAYLOAD}')
    return message_type, payload_len


def decode_payload(message_type: MessageType, payload: Union[bytes, bytearray, memoryview]) -> WireMessage:
    reader = _Reader(memoryview(payload))
    try:
        message = MESSAGE_TYPES[message_type].decode_payload(reader)
    except ValueError as error:
        raise MalformedPayloadError(str(error)) from error
    if reader.remaining:
        raise TrailingBytesError(f'{reader.remaining} bytes left after the {message_type.name} fields')
    return message


def decode_message(frame: Union[bytes, bytearray, memoryview]) -> WireMessage:
    """
    Decode exactly one complete frame.
    @param frame: Frame bytes.
    @type frame: bytes
    @return: Decoded message.
    @rtype: WireMessage
    """
    message_type, payload_len = decode_header(frame)
    available = len(frame) - HEADER_SIZE
    if available < payload_len:
        raise TruncatedFrameError(f'declared payload of {payload_len} bytes, only {available} present')
    if available > payload_len:
        raise TrailingBytesError(f'{available - payload_len} bytes after the end of the frame')
    return decode_payload(message_type, memoryview(frame)[HEADER_SIZE:])


def frame_size(message: WireMessage) -> int:
    return len(encode_message(message))
