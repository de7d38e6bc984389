from .framing import read_frame, write_frame
from .protocol import MessageType, ProtocolError, Role, decode_message, encode_message
from .transport import Exchange, FrameServer, InProcessTransport, SocketTransport, Transport
