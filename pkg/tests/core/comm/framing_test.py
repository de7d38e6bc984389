import socket
import threading
import time
import unittest

from fedmesh.core.comm.framing import read_frame, read_frame_bytes, write_frame
from fedmesh.core.comm.protocol import HEADER_SIZE, BadMagicError, ConnectionClosedError, FrameTimeoutError, \
    GlobalModel, MessageType, PlanEntry, Role, RoundPlan, Shutdown, encode_message
from fedmesh.nets.util.parameters import ParameterVector


def _trickle(stream: socket.socket, data: bytes, close: bool = False) -> threading.Thread:
    def send():
        for position in range(len(data)):
            stream.sendall(data[position:position + 1])
            time.sleep(0.0005)
        if close:
            stream.close()
    thread = threading.Thread(target=send, daemon=True)
    thread.start()
    return thread


class TestFraming(unittest.TestCase):

    def setUp(self):
        self.reader, self.writer = socket.socketpair()

    def tearDown(self):
        self.reader.close()
        self.writer.close()

    def test_write_then_read(self):
        message = GlobalModel(9, ParameterVector([0.5, -0.25]))
        written = write_frame(self.writer, message)
        self.assertEqual(len(encode_message(message)), written)
        self.assertEqual(message, read_frame(self.reader, timeout=5.0))

    def test_one_byte_chunks_are_reassembled(self):
        message = RoundPlan(2, (PlanEntry(1, '127.0.0.1', 4000, Role.SENDER, 2),
                                PlanEntry(2, '127.0.0.1', 4001, Role.RECEIVER, 1)))
        frame = encode_message(message)
        thread = _trickle(self.writer, frame)
        message_type, received = read_frame_bytes(self.reader, timeout=5.0)
        thread.join()
        self.assertIs(MessageType.ROUND_PLAN, message_type)
        self.assertEqual(frame, received)

    def test_back_to_back_frames(self):
        first, second = Shutdown('a'), GlobalModel(1, ParameterVector([1.0]))
        self.writer.sendall(encode_message(first) + encode_message(second))
        self.assertEqual(first, read_frame(self.reader, timeout=5.0))
        self.assertEqual(second, read_frame(self.reader, timeout=5.0))

    def test_close_mid_frame(self):
        frame = encode_message(GlobalModel(1, ParameterVector([1.0, 2.0])))
        _trickle(self.writer, frame[:HEADER_SIZE + 3], close=True).join()
        with self.assertRaises(ConnectionClosedError) as context:
            read_frame(self.reader, timeout=5.0)
        self.assertIn('mid-frame', str(context.exception))

    def test_close_before_a_frame(self):
        self.writer.close()
        with self.assertRaises(ConnectionClosedError) as context:
            read_frame(self.reader, timeout=5.0)
        self.assertIn('before a frame', str(context.exception))

    def test_read_timeout(self):
        self.writer.sendall(encode_message(Shutdown('late'))[:4])
        with self.assertRaises(FrameTimeoutError):
            read_frame(self.reader, timeout=0.1)

    def test_bad_magic_consumes_the_header_only(self):
        good = encode_message(Shutdown('next'))
        bad = b'XKBP' + good[4:HEADER_SIZE]
        self.writer.sendall(bad + good[HEADER_SIZE:] + good)
        with self.assertRaises(BadMagicError):
            read_frame(self.reader, timeout=5.0)
        # The payload of the rejected frame is left unread.
        self.assertEqual(good[HEADER_SIZE:], self.reader.recv(len(good) - HEADER_SIZE))
