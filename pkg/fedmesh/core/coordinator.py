import threading
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from fedmesh.core.comm.protocol import PlanEntry, Role, RoundPlan, StatusUpdate, WireMessage
from fedmesh.core.comm.transport import Transport
from fedmesh.core.node import FederationError, ServerNode, SiteStatus
from fedmesh.strategy.client_selection import RoundPairing, dropout_step, pair_active_sites
from fedmesh.util.data_container import DataContainer, RoundMetrics, TrafficRecord
from fedmesh.util.timer import elapsed_timer


class Coordinator(ServerNode):
    """
    Control plane of GCML. The coordinator never sees model parameters: each round it pairs the active sites, sends
    every site the round plan and collects status replies. Its traffic log records the type and peer of every message,
    which makes the absence of parameter-carrying traffic auditable.
    """

    def __init__(self, config, transport: Transport, output_path: Optional[Path] = None):
        super().__init__('coordinator', config, transport, output_path)
        self.traffic = DataContainer('coordinator_traffic', output_path, TrafficRecord,
                                     append_mode=output_path is not None)
        self._traffic_lock = threading.Lock()
        self.unresponsive: Set[int] = set()
        self.failed_pairs: List[Tuple[int, int, int]] = []

    def on_traffic(self, direction: str, message: WireMessage, peer: Optional[int] = None) -> None:
        # Registration frames arrive on concurrent handler threads.
        with self._traffic_lock:
            self.traffic.append(TrafficRecord(direction, message.TYPE.name, getattr(message, 'round', None), peer))

    def build_plan(self, round_id: int, pairing: RoundPairing) -> RoundPlan:
        entries = []
        for sender, receiver in pairing.pairs:
            entries.append(self._entry(sender, Role.SENDER, receiver))
            entries.append(self._entry(receiver, Role.RECEIVER, sender))
        entries.extend(self._entry(site_id, Role.IDLE) for site_id in pairing.idle)
        return RoundPlan(round_id, tuple(entries))

    def _entry(self, site_id: int, role: Role, peer_id: Optional[int] = None) -> PlanEntry:
        metadata = self.sites[site_id]
        metadata.role, metadata.peer_id = role, peer_id
        return PlanEntry(site_id, metadata.host, metadata.port, role, peer_id)

    def exec_round(self, round_id: int) -> RoundMetrics:
        with elapsed_timer() as timer:
            self.dropout = dropout_step(self.dropout, self.rng)
            self.update_statuses()
            active = [site_id for site_id in self.dropout.active if site_id not in self.unresponsive]
            if not active:
                raise FederationError(f'no responsive site is active in round {round_id}')
            pairing = pair_active_sites(active, self.rng)
            plan = self.build_plan(round_id, pairing)
            # Senders go first so that, dispatched one at a time, every transfer lands before its receiver runs.
            order = pairing.senders + pairing.receivers + list(pairing.idle) + \
                [site_id for site_id in self.config.site_ids if site_id not in active]
            exchanges = self.message_many(self.site_calls(order, plan), timeout=self.config.round_timeout)
            statuses = self._collect_statuses(round_id, order, exchanges, set(active))
            for sender, receiver in pairing.pairs:
                if sender not in statuses or receiver not in statuses:
                    self.failed_pairs.append((round_id, sender, receiver))
                    self.logger.warning(f'[Round {round_id:>3}] Pair {sender} -> {receiver} failed')
        return self._record_round(round_id, pairing, statuses, timer())

    def _collect_statuses(self, round_id: int, order, exchanges, active: Set[int]) -> Dict[int, StatusUpdate]:
        statuses = {}
        for site_id, exchange in zip(order, exchanges):
            reply = exchange.reply
            if isinstance(reply, StatusUpdate) and reply.round == round_id and reply.site_id == site_id:
                statuses[site_id] = reply
                self.unresponsive.discard(site_id)
                self.sites[site_id].last_validation_loss = reply.validation_loss
            elif site_id in active:
                self.unresponsive.add(site_id)
                self.sites[site_id].status = SiteStatus.DROPPED
                self.logger.warning(f'[Round {round_id:>3}] Site {site_id} did not report status '
                                    f'({exchange.error or "no reply"}), excluded from pairing')
        return statuses

    def _record_round(self, round_id: int, pairing: RoundPairing, statuses: Dict[int, StatusUpdate],
                      wall_ms: float) -> RoundMetrics:
        reported = [status.validation_loss for status in statuses.values() if status.active]
        val_loss = float(np.mean(reported)) if reported else None
        sent, received = self.pop_round_bytes(round_id)
        record = RoundMetrics(round_id, None, 'COORDINATOR', None, val_loss, None, None, sent, received, wall_ms)
        self.exp_data.append(record)
        self.logger.info(f'[Round {round_id:>3}] {len(pairing.pairs)} pairs, {len(pairing.idle)} idle, '
                         f'{len(statuses)} statuses ({wall_ms:.1f} ms)')
        return record

    def save_data(self) -> None:
        super().save_data()
        self.traffic.save()
