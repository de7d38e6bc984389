import socket
from typing import Tuple

from fedmesh.core.comm.protocol import (HEADER_SIZE, ConnectionClosedError, FrameTimeoutError, MessageType,
                                        WireMessage, decode_header, decode_payload, encode_message)

DEFAULT_READ_TIMEOUT = 30.0


def _recv_exactly(stream: socket.socket, count: int, started: bool) -> bytes:
    chunks = []
    received = 0
    while received < count:
        try:
            chunk = stream.recv(count - received)
        except socket.timeout as error:
            raise FrameTimeoutError(f'read timed out after {received} of {count} bytes') from error
        if not chunk:
            where = 'mid-frame' if started or received else 'before a frame'
            raise ConnectionClosedError(f'connection closed {where} ({received} of {count} bytes)')
        chunks.append(chunk)
        received += len(chunk)
    return b''.join(chunks)


def read_frame_bytes(stream: socket.socket, timeout: float = DEFAULT_READ_TIMEOUT) -> Tuple[MessageType, bytes]:
    """
    Read one complete frame. The header is validated before the payload is read, so a bad magic, version, type or
    length consumes the header bytes only.
    @param stream: Connected stream socket.
    @type stream: socket.socket
    @param timeout: Read timeout in seconds, `None` blocks.
    @type timeout: float
    @return: Message type and the complete frame bytes.
    @rtype: Tuple[MessageType, bytes]
    """
    stream.settimeout(timeout)
    header = _recv_exactly(stream, HEADER_SIZE, started=False)
    message_type, payload_len = decode_header(header)
    payload = _recv_exactly(stream, payload_len, started=True) if payload_len else b''
    return message_type, header + payload


def read_frame(stream: socket.socket, timeout: float = DEFAULT_READ_TIMEOUT) -> WireMessage:
    message_type, frame = read_frame_bytes(stream, timeout)
    return decode_payload(message_type, memoryview(frame)[HEADER_SIZE:])


def write_frame(stream: socket.socket, message: WireMessage) -> int:
    """
    Write one message as a single `sendall`, so a reader never sees two frames interleave on one connection.
    @return: Number of bytes written.
    @rtype: int
    """
    frame = encode_message(message)
    stream.sendall(frame)
    return len(frame)


def write_frame_bytes(stream: socket.socket, frame: bytes) -> int:
    stream.sendall(frame)
    return len(frame)
