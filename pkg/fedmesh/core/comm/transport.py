"""
Message transports. Both implementations move encoded frames, so in-process runs exercise the exact bytes that socket
runs put on the wire; they differ only in how frames reach their handler.
"""
import socket
import socketserver
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from multiprocessing.pool import ThreadPool
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from fedmesh.core.comm.framing import DEFAULT_READ_TIMEOUT, read_frame_bytes, write_frame_bytes
from fedmesh.core.comm.protocol import HEADER_SIZE, ProtocolError, WireMessage, decode_message, decode_payload, \
    encode_message
from fedmesh.util.log import getLogger

Address = Tuple[str, int]
FrameHandler = Callable[[bytes], Optional[bytes]]


@dataclass(frozen=True)
class Exchange:
    """
    Outcome of one dial: the decoded reply (if any), the frame bytes in both directions and the failure, if the
    exchange did not complete.
    """
    address: Address
    request: WireMessage
    reply: Optional[WireMessage] = None
    sent: int = 0
    received: int = 0
    error: Optional[BaseException] = None

    @property
    def ok(self) -> bool:
        return self.error is None


class Transport(ABC):
    logger = getLogger(__name__)

    @abstractmethod
    def exchange(self, address: Address, message: WireMessage, expect_reply: bool = True,
                 timeout: Optional[float] = None) -> Exchange:
        """
        Dial `address`, send one frame and, when `expect_reply` is set, read one reply frame. Failures are captured in
        the returned exchange rather than raised.
        """

    def exchange_many(self, calls: Sequence[Tuple[Address, WireMessage]], expect_reply: bool = True,
                      timeout: Optional[float] = None) -> List[Exchange]:
        return [self.exchange(address, message, expect_reply, timeout) for address, message in calls]

    def close(self) -> None:
        pass


class InProcessTransport(Transport):
    """
    Single-threaded transport: frames are handed to the registered handler of the destination address in call order.
    Opens no sockets.
    """

    def __init__(self):
        self.handlers: Dict[Address, FrameHandler] = {}

    def bind(self, address: Address, handler: FrameHandler) -> None:
        if address in self.handlers:
            raise ValueError(f'address {address[0]}:{address[1]} is already bound')
        self.handlers[address] = handler

    def exchange(self, address: Address, message: WireMessage, expect_reply: bool = True,
                 timeout: Optional[float] = None) -> Exchange:
        frame = encode_message(message)
        handler = self.handlers.get(tuple(address))
        if handler is None:
            error = ConnectionRefusedError(f'no node bound at {address[0]}:{address[1]}')
            return Exchange(address, message, error=error)
        try:
            reply_frame = handler(frame)
            if not expect_reply or reply_frame is None:
                return Exchange(address, message, sent=len(frame))
            return Exchange(address, message, decode_message(reply_frame), len(frame), len(reply_frame))
        except (ProtocolError, OSError) as error:
            return Exchange(address, message, sent=len(frame), error=error)


class SocketTransport(Transport):
    """
    TCP transport with one connection per exchange. Concurrent calls of `exchange_many` run on a thread pool.
    """

    def __init__(self, read_timeout: float = DEFAULT_READ_TIMEOUT):
        self.read_timeout = read_timeout

    def exchange(self, address: Address, message: WireMessage, expect_reply: bool = True,
                 timeout: Optional[float] = None) -> Exchange:
        frame = encode_message(message)
        try:
            with socket.create_connection(tuple(address), timeout=self.read_timeout) as connection:
                sent = write_frame_bytes(connection, frame)
                if not expect_reply:
                    return Exchange(address, message, sent=sent)
                message_type, reply_frame = read_frame_bytes(connection, timeout or self.read_timeout)
                reply = decode_payload(message_type, memoryview(reply_frame)[HEADER_SIZE:])
                return Exchange(address, message, reply, sent, len(reply_frame))
        except (ProtocolError, OSError) as error:
            return Exchange(address, message, sent=0, error=error)

    def exchange_many(self, calls: Sequence[Tuple[Address, WireMessage]], expect_reply: bool = True,
                      timeout: Optional[float] = None) -> List[Exchange]:
        if len(calls) <= 1:
            return super().exchange_many(calls, expect_reply, timeout)
        with ThreadPool(len(calls)) as pool:
            return pool.starmap(self.exchange, [(address, message, expect_reply, timeout)
                                                for address, message in calls])


class _FrameRequestHandler(socketserver.BaseRequestHandler):
    server: 'FrameServer'

    def handle(self):
        try:
            _, frame = read_frame_bytes(self.request, self.server.read_timeout)
        except (ProtocolError, OSError) as error:
            self.server.logger.warning(f'Dropping connection from {self.client_address}: {error}')
            return
        reply = self.server.frame_handler(frame)
        if reply is not None:
            try:
                write_frame_bytes(self.request, reply)
            except OSError as error:
                self.server.logger.warning(f'Could not reply to {self.client_address}: {error}')


class FrameServer(socketserver.ThreadingTCPServer):
    """
    Listening side of the socket transport: every accepted connection is served on its own thread, which reads one
    frame, passes it to `frame_handler` and writes back the reply frame, if any.
    """
    allow_reuse_address = True
    daemon_threads = True
    logger = getLogger(__name__)

    def __init__(self, address: Address, frame_handler: FrameHandler, read_timeout: float = DEFAULT_READ_TIMEOUT):
        super().__init__(tuple(address), _FrameRequestHandler)
        self.frame_handler = frame_handler
        self.read_timeout = read_timeout
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> Address:
        host, port = self.server_address[:2]
        return host, port

    def start(self) -> 'FrameServer':
        self._thread = threading.Thread(target=self.serve_forever, name=f'frame-server-{self.address[1]}',
                                        daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._thread is not None:
            self.shutdown()
            self._thread.join()
            self._thread = None
        self.server_close()

    def handle_error(self, request, client_address):
        self.logger.exception(f'Unhandled error while serving {client_address}')
