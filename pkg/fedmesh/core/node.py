import abc
import threading
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from fedmesh.core.comm.protocol import ProtocolError, Register, Role, Shutdown, WireMessage, decode_message, \
    encode_message
from fedmesh.core.comm.transport import Address, Exchange, Transport
from fedmesh.strategy.client_selection.dropout import DropoutState
from fedmesh.util.config.federation import FederationConfig
from fedmesh.util.data_container import DataContainer, RoundMetrics
from fedmesh.util.log import getLogger


class FederationError(RuntimeError):
    """
    Runtime failure of a federation: no active site at a round start, no update received, or a registration barrier
    that timed out.
    """


class SiteStatus(Enum):
    ACTIVE = 'ACTIVE'
    DROPPED = 'DROPPED'


@dataclass
class SiteMetadata:
    site_id: int
    host: str
    port: int
    case_count: int
    status: SiteStatus = SiteStatus.ACTIVE
    last_validation_loss: Optional[float] = None
    role: Role = Role.IDLE
    peer_id: Optional[int] = None

    @property
    def address(self) -> Address:
        return self.host, self.port


class Node(abc.ABC):
    """
    Implementation of any participating node. All communication goes through `message`, `message_many` and
    `handle_frame`, which also keep the per-round byte counters; whether frames travel over sockets or are handed over
    in memory is up to the transport.
    """
    id: str
    logger = getLogger(__name__)

    def __init__(self, identifier: str, config: FederationConfig, transport: Transport):
        self.id = identifier  # pylint: disable=invalid-name
        self.config = config
        self.transport = transport
        self._lock = threading.RLock()
        self._round_bytes: Dict[Optional[int], List[int]] = defaultdict(lambda: [0, 0])

    def _account(self, message: WireMessage, sent: int = 0, received: int = 0) -> None:
        with self._lock:
            counters = self._round_bytes[getattr(message, 'round', None)]
            counters[0] += sent
            counters[1] += received

    def pop_round_bytes(self, round_id: Optional[int]) -> Tuple[int, int]:
        with self._lock:
            sent, received = self._round_bytes.pop(round_id, (0, 0))
        return sent, received

    def on_traffic(self, direction: str, message: WireMessage, peer: Optional[int] = None) -> None:
        """
        Hook invoked for every frame this node sends or receives.
        """
        self.logger.debug(f'[{self.id}] {direction} {message.TYPE.name} peer={peer}')

    def _record_exchange(self, exchange: Exchange, peer: Optional[int] = None) -> Exchange:
        self._account(exchange.request, sent=exchange.sent)
        self.on_traffic('out', exchange.request, peer)
        if exchange.reply is not None:
            self._account(exchange.reply, received=exchange.received)
            self.on_traffic('in', exchange.reply, peer)
        return exchange

    def message(self, address: Address, message: WireMessage, expect_reply: bool = True,
                timeout: Optional[float] = None, peer: Optional[int] = None) -> Exchange:
        """
        All communication with other nodes should go through this method.
        @return: The completed (or failed) exchange.
        @rtype: Exchange
        """
        return self._record_exchange(self.transport.exchange(address, message, expect_reply, timeout), peer)

    def message_many(self, calls: Sequence[Tuple[int, Address, WireMessage]], expect_reply: bool = True,
                     timeout: Optional[float] = None) -> List[Exchange]:
        """
        Send one message per peer. Exchanges come back in call order, whatever order they complete in.
        """
        exchanges = self.transport.exchange_many([(address, message) for _, address, message in calls],
                                                 expect_reply, timeout)
        return [self._record_exchange(exchange, peer) for (peer, _, _), exchange in zip(calls, exchanges)]

    def handle_frame(self, frame: bytes) -> Optional[bytes]:
        """
        Entry point of every incoming frame: decode, dispatch and encode the reply, if any.
        """
        try:
            message = decode_message(frame)
        except ProtocolError as error:
            self.logger.warning(f'[{self.id}] Discarding malformed frame: {error}')
            return None
        self._account(message, received=len(frame))
        self.on_traffic('in', message, getattr(message, 'site_id', getattr(message, 'sender_id', None)))
        reply = self.dispatch(message)
        if reply is None:
            return None
        reply_frame = encode_message(reply)
        self._account(reply, sent=len(reply_frame))
        self.on_traffic('out', reply)
        self.after_reply(message, reply)
        return reply_frame

    @abc.abstractmethod
    def dispatch(self, message: WireMessage) -> Optional[WireMessage]:
        """
        Handle one incoming message and return the reply to send back, if any.
        """

    def after_reply(self, message: WireMessage, reply: WireMessage) -> None:
        pass


class ServerNode(Node):
    """
    Shared plumbing of the aggregation and coordination servers: the site registry and registration barrier, the
    drop-out walk, the round loop and the final shutdown broadcast.
    """
    exp_data: DataContainer

    def __init__(self, identifier: str, config: FederationConfig, transport: Transport,
                 output_path: Optional[Path] = None):
        super().__init__(identifier, config, transport)
        self.sites: Dict[int, SiteMetadata] = {}
        self._registered = threading.Condition(self._lock)
        self.rng = np.random.default_rng(config.seed)
        self.dropout = DropoutState.initial(config.site_ids, config.dropout.n_max, config.dropout.mode)
        self.exp_data = DataContainer(identifier, output_path, RoundMetrics, append_mode=output_path is not None)
        self.output_path = output_path

    def dispatch(self, message: WireMessage) -> Optional[WireMessage]:
        if isinstance(message, Register):
            self.register_site(message)
        else:
            self.logger.warning(f'[{self.id}] Ignoring unexpected {message.TYPE.name}')
        return None

    def register_site(self, message: Register) -> None:
        if message.site_id not in self.config.site_ids:
            self.logger.warning(f'Rejecting registration of unknown site {message.site_id}')
            return
        with self._registered:
            self.sites[message.site_id] = SiteMetadata(message.site_id, message.listen_host, message.listen_port,
                                                       message.case_count)
            self.logger.info(f'Site {message.site_id} registered at {message.listen_host}:{message.listen_port}')
            self._registered.notify_all()

    def _all_sites_online(self) -> bool:
        return all(site_id in self.sites for site_id in self.config.site_ids)

    def wait_for_registration(self, timeout: Optional[float] = None) -> None:
        with self._registered:
            if not self._registered.wait_for(self._all_sites_online, timeout):
                missing = [site_id for site_id in self.config.site_ids if site_id not in self.sites]
                raise FederationError(f'registration barrier timed out, missing sites {missing}')
        self.logger.info('All sites are online')

    def site_calls(self, site_ids: Sequence[int], message: WireMessage) -> List[Tuple[int, Address, WireMessage]]:
        return [(site_id, self.sites[site_id].address, message) for site_id in site_ids]

    def update_statuses(self) -> List[int]:
        active = self.dropout.active
        for site_id, metadata in self.sites.items():
            metadata.status = SiteStatus.ACTIVE if self.dropout.is_active(site_id) else SiteStatus.DROPPED
        if not active:
            raise FederationError('no site is active at the start of the round')
        return active

    @abc.abstractmethod
    def exec_round(self, round_id: int) -> RoundMetrics:
        pass

    def broadcast_shutdown(self, reason: str) -> None:
        self.message_many(self.site_calls(list(self.sites), Shutdown(reason)), expect_reply=False)

    def run(self) -> None:
        """
        Wait for every site, run all rounds and broadcast SHUTDOWN, also when a round fails.
        @return: None
        @rtype: None
        """
        self.wait_for_registration(self.config.registration_timeout)
        reason = 'federation finished'
        try:
            for round_id in range(1, self.config.rounds + 1):
                self.exec_round(round_id)
        except Exception as error:
            reason = f'federation aborted: {error}'
            raise
        finally:
            self.broadcast_shutdown(reason)
            self.save_data()
        self.logger.info(f'{self.id} is stopping')

    def save_data(self) -> None:
        self.exp_data.save()
