"""Queue/retransmit anytime code for erasure channels with output feedback.

Bits join a FIFO; every channel use carries the oldest not-yet-delivered
packet of L bits (padded when the queue runs short).  Erasures are common
knowledge -- the decoder sees them, the encoder learns them through
feedback -- so both ends agree on which bit indices each packet carried
without any header.  Delivered bits are final and exact; pending bits are
estimated by a fixed default, which is what makes this an anytime code:
the probability that a bit older than d is still pending decays
exponentially in d as long as the arrival rate is below (1 - delta) * L.
"""

from typing import Callable, List

import numpy as np

from anyloop.channels import ERASURE

__all__ = ["RetransmitEncoder", "RetransmitDecoder"]


class _QueueBookkeeping:
    """Delivery bookkeeping shared (by construction) between both ends."""

    def __init__(self, bits_per_packet: int, arrived_by: Callable[[int], int]):
        if bits_per_packet < 1:
            raise ValueError("bits_per_packet must be >= 1")
        self.L = bits_per_packet
        self.arrived_by = arrived_by
        self.next_undelivered = 0

    def packet_span(self, t: int):
        """Bit indexes [base, base + carried) of the packet formed at use t."""
        base = self.next_undelivered
        carried = min(self.L, max(0, self.arrived_by(t) - base))
        return base, carried

    def mark_delivered(self, t: int):
        base, carried = self.packet_span(t)
        self.next_undelivered = base + carried
        return base, carried


class RetransmitEncoder:
    def __init__(self, bits_per_packet: int, arrived_by: Callable[[int], int]):
        self.book = _QueueBookkeeping(bits_per_packet, arrived_by)
        self.bits: List[int] = []
        self._pending_outcomes: List[int] = []  # uses whose outcome is unknown

    def push(self, bits):
        """Append newly arrived bits (each +1 or -1)."""
        for b in bits:
            if b not in (-1, 1):
                raise ValueError("bits must be +1 or -1")
            self.bits.append(int(b))

    def channel_input(self, t: int) -> int:
        """Packet for use t, decided on outcomes learned so far."""
        if len(self.bits) < self.book.arrived_by(t):
            raise ValueError("arrival schedule promises more bits than were pushed")
        base, carried = self.book.packet_span(t)
        value = 0
        for i in range(carried):
            if self.bits[base + i] == 1:
                value |= 1 << i
        self._pending_outcomes.append(t)
        return value

    def learn_outcome(self, delivered: bool):
        """Feedback for the oldest use whose outcome was unknown."""
        if not self._pending_outcomes:
            raise ValueError("no outstanding channel use")
        t = self._pending_outcomes.pop(0)
        if delivered:
            self.book.mark_delivered(t)

    @property
    def backlog(self) -> int:
        return len(self.bits) - self.book.next_undelivered


class RetransmitDecoder:
    def __init__(self, bits_per_packet: int, arrived_by: Callable[[int], int],
                 default_bit: int = 1):
        self.book = _QueueBookkeeping(bits_per_packet, arrived_by)
        self.decoded: List[int] = []
        self.default_bit = default_bit

    def observe(self, t: int, output):
        """Process the channel output of use t (in order)."""
        if output is ERASURE:
            return
        base, carried = self.book.mark_delivered(t)
        assert base == len(self.decoded), "outputs must be processed in order"
        for i in range(carried):
            self.decoded.append(1 if (int(output) >> i) & 1 else -1)

    @property
    def finalized_count(self) -> int:
        return len(self.decoded)

    def estimates(self, n_bits: int) -> np.ndarray:
        """Current estimates for bits 0..n_bits-1; pending ones get the default."""
        out = np.full(n_bits, self.default_bit, dtype=np.int64)
        m = min(n_bits, len(self.decoded))
        out[:m] = self.decoded[:m]
        return out
