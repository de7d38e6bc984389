import socket
import threading
import unittest

from fedmesh.core.comm.protocol import GlobalModel, ProtocolError, Shutdown, StatusUpdate, decode_message, \
    encode_message
from fedmesh.core.comm.transport import FrameServer, InProcessTransport, SocketTransport
from fedmesh.nets.util.parameters import ParameterVector


def _status_handler(frame: bytes) -> bytes:
    message = decode_message(frame)
    return encode_message(StatusUpdate(7, message.round, True, float(message.params.values.sum())))


class TestInProcessTransport(unittest.TestCase):

    def setUp(self):
        self.transport = InProcessTransport()
        self.transport.bind(('site-7', 0), _status_handler)

    def test_exchange(self):
        request = GlobalModel(3, ParameterVector([1.0, 2.0]))
        exchange = self.transport.exchange(('site-7', 0), request)
        self.assertTrue(exchange.ok)
        self.assertEqual(StatusUpdate(7, 3, True, 3.0), exchange.reply)
        self.assertEqual(len(encode_message(request)), exchange.sent)
        self.assertEqual(len(encode_message(exchange.reply)), exchange.received)

    def test_without_reply(self):
        exchange = self.transport.exchange(('site-7', 0), GlobalModel(3, ParameterVector([1.0])), expect_reply=False)
        self.assertTrue(exchange.ok)
        self.assertIsNone(exchange.reply)
        self.assertEqual(0, exchange.received)

    def test_unbound_address(self):
        exchange = self.transport.exchange(('site-8', 0), Shutdown())
        self.assertFalse(exchange.ok)
        self.assertIsInstance(exchange.error, ConnectionRefusedError)

    def test_duplicate_bind(self):
        with self.assertRaises(ValueError):
            self.transport.bind(('site-7', 0), _status_handler)

    def test_handler_failure_is_captured(self):
        self.transport.bind(('broken', 0), lambda frame: b'garbage')
        exchange = self.transport.exchange(('broken', 0), Shutdown())
        self.assertIsInstance(exchange.error, ProtocolError)

    def test_calls_run_in_order(self):
        seen = []
        self.transport.bind(('recorder', 0), lambda frame: seen.append(decode_message(frame).round))
        self.transport.exchange_many([(('recorder', 0), GlobalModel(round_id, ParameterVector([0.0])))
                                      for round_id in (5, 3, 9)], expect_reply=False)
        self.assertEqual([5, 3, 9], seen)


class TestSocketTransport(unittest.TestCase):

    def setUp(self):
        self.server = FrameServer(('127.0.0.1', 0), _status_handler, read_timeout=5.0).start()
        self.transport = SocketTransport(read_timeout=5.0)

    def tearDown(self):
        self.server.stop()

    def test_exchange_over_tcp(self):
        request = GlobalModel(4, ParameterVector([0.5, 0.25]))
        exchange = self.transport.exchange(self.server.address, request)
        self.assertTrue(exchange.ok, exchange.error)
        self.assertEqual(StatusUpdate(7, 4, True, 0.75), exchange.reply)
        self.assertEqual(len(encode_message(request)), exchange.sent)

    def test_parallel_exchanges_keep_call_order(self):
        calls = [(self.server.address, GlobalModel(round_id, ParameterVector([float(round_id)])))
                 for round_id in range(1, 9)]
        exchanges = self.transport.exchange_many(calls)
        self.assertEqual(list(range(1, 9)), [exchange.reply.round for exchange in exchanges])

    def test_refused_connection(self):
        with socket.socket() as probe:
            probe.bind(('127.0.0.1', 0))
            address = probe.getsockname()
        exchange = self.transport.exchange(address, Shutdown())
        self.assertFalse(exchange.ok)
        self.assertIsInstance(exchange.error, OSError)

    def test_malformed_frame_is_dropped(self):
        received = threading.Event()

        def handler(frame):
            received.set()
            return None

        server = FrameServer(('127.0.0.1', 0), handler, read_timeout=5.0).start()
        try:
            with socket.create_connection(server.address, timeout=5.0) as connection:
                connection.sendall(b'XKBP' + bytes(6))
                # The server closes the connection without calling the handler.
                self.assertEqual(b'', connection.recv(1))
            self.assertFalse(received.is_set())
        finally:
            server.stop()
