"""
Data-center topology: link latency and bandwidth, prices, and the request
latency function (RTT plus payload over bandwidth, straggler for patterns).
"""
import logging
import math
from dataclasses import dataclass, replace
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Dict, Mapping, Sequence, Tuple

from .exceptions import (
    EmptyServingMapError,
    MissingLinkError,
    NegativePriceError,
    UnknownDCError,
    WanParseError,
    ZeroBandwidthError,
)

logger = logging.getLogger(__name__)

GB = 10 ** 9
MILLION = 10 ** 6


@dataclass(frozen=True)
class DataCenter:
    id: str
    region: str
    store_price: float   # $/GB/month
    read_price: float    # $/million GETs
    write_price: float   # $/million PUTs

    def __post_init__(self):
        for name in ('store_price', 'read_price', 'write_price'):
            value = getattr(self, name)
            if value < 0:
                raise NegativePriceError(self.id, name, value)


@dataclass(frozen=True)
class LinkProfile:
    rtt_s: float
    bandwidth_bps: float
    transfer_price: float  # $/GB


SELF_LINK = LinkProfile(rtt_s=0.0, bandwidth_bps=math.inf, transfer_price=0.0)


@dataclass(frozen=True)
class ProviderPrices:
    provider: str
    store_price: float
    read_price: float
    write_price: float
    transfer_price: float


class WanProfile:
    """DCs plus a complete matrix of directed link profiles."""

    def __init__(self, dcs: Sequence[DataCenter], links: Mapping[Tuple[str, str], LinkProfile]):
        self.dcs: Tuple[DataCenter, ...] = tuple(dcs)
        self._by_id: Dict[str, DataCenter] = {dc.id: dc for dc in self.dcs}
        self.links: Dict[Tuple[str, str], LinkProfile] = {}
        for a in self.dc_ids:
            for b in self.dc_ids:
                if a == b:
                    continue
                link = links.get((a, b))
                if link is None:
                    raise MissingLinkError(a, b)
                if not link.bandwidth_bps > 0:
                    raise ZeroBandwidthError(a, b)
                if link.rtt_s < 0:
                    raise WanParseError('<profile>', 0, f"negative rtt on {a} -> {b}")
                if link.transfer_price < 0:
                    raise NegativePriceError(f"{a}->{b}", 'transfer_price', link.transfer_price)
                self.links[(a, b)] = link

    def __repr__(self):
        return f"<WanProfile {','.join(self.dc_ids)}>"

    @property
    def dc_ids(self) -> Tuple[str, ...]:
        return tuple(dc.id for dc in self.dcs)

    def dc(self, dc_id) -> DataCenter:
        try:
            return self._by_id[dc_id]
        except KeyError:
            raise UnknownDCError(dc_id) from None

    def link(self, src, dst) -> LinkProfile:
        self.dc(src)
        self.dc(dst)
        if src == dst:
            return SELF_LINK
        return self.links[(src, dst)]

    def transfer_price(self, src, dst) -> float:
        return self.link(src, dst).transfer_price

    def request_latency(self, origin, server, payload_bytes) -> float:
        """Latency for ``origin`` to fetch ``payload_bytes`` from ``server``."""
        link = self.link(server, origin)
        if origin == server:
            return 0.0
        return link.rtt_s + payload_bytes * 8 / link.bandwidth_bps

    def pattern_latency(self, origin, serving: Mapping[str, int]) -> float:
        """Latency of a multi-DC request: the slowest responder."""
        if not serving:
            raise EmptyServingMapError(origin)
        return max(self.request_latency(origin, dc, payload) for dc, payload in serving.items())

    def mean_rtt(self, pairs) -> float:
        pairs = list(pairs)
        if not pairs:
            return 0.0
        return sum(self.link(a, b).rtt_s for a, b in pairs) / len(pairs)

    def with_prices(self, book: Mapping[str, ProviderPrices], provider) -> 'WanProfile':
        """Copy of the profile with one provider's prices applied everywhere."""
        prices = book[provider]
        dcs = [
            replace(dc, store_price=prices.store_price,
                    read_price=prices.read_price, write_price=prices.write_price)
            for dc in self.dcs
        ]
        links = {
            pair: replace(link, transfer_price=prices.transfer_price)
            for pair, link in self.links.items()
        }
        return WanProfile(dcs, links)


def _sections(path):
    section = None
    with open(path, encoding='utf-8') as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            if line.startswith('[') and line.endswith(']'):
                section = line[1:-1].strip().lower()
                continue
            if section is None:
                raise WanParseError(path, line_no, 'line outside of a section')
            yield section, line_no, line.split()


def _numbers(path, line_no, tokens, exponents=None):
    """Parse decimal tokens, each scaled by 10 ** exponent and rounded to float once."""
    exponents = exponents or [0] * len(tokens)
    try:
        return [float(Decimal(t).scaleb(k)) for t, k in zip(tokens, exponents)]
    except InvalidOperation:
        raise WanParseError(path, line_no, f"expected numbers, got {' '.join(tokens)}") from None


def load_wan_profile(path) -> WanProfile:
    """
    Read a profile file with ``[dcs]`` rows ``id region store read write`` and
    ``[links]`` rows ``from to rtt_ms bw_mbps price_per_gb``. A link given in
    one direction only is mirrored.
    """
    path = Path(path)
    dcs, links = [], {}
    for section, line_no, tokens in _sections(path):
        if section == 'dcs':
            if len(tokens) != 5:
                raise WanParseError(path, line_no, 'expected: id region store read write')
            store, read, write = _numbers(path, line_no, tokens[2:])
            dcs.append(DataCenter(tokens[0], tokens[1], store, read, write))
        elif section == 'links':
            if len(tokens) != 5:
                raise WanParseError(path, line_no, 'expected: from to rtt_ms bw_mbps price_per_gb')
            rtt_s, bps, price = _numbers(path, line_no, tokens[2:], [-3, 6, 0])
            if bps <= 0:
                raise ZeroBandwidthError(tokens[0], tokens[1])
            if price < 0:
                raise NegativePriceError(f"{tokens[0]}->{tokens[1]}", 'transfer_price', price)
            links[(tokens[0], tokens[1])] = LinkProfile(rtt_s, bps, price)
        else:
            raise WanParseError(path, line_no, f"unknown section [{section}]")

    known = {dc.id for dc in dcs}
    for (a, b) in list(links):
        for dc_id in (a, b):
            if dc_id not in known:
                raise UnknownDCError(dc_id)
        links.setdefault((b, a), links[(a, b)])

    profile = WanProfile(dcs, links)
    logger.info("Loaded WAN profile %s with %d DCs", path.name, len(dcs))
    return profile


def _fmt(value, exponent=0) -> str:
    """Shortest round-tripping text of ``value * 10 ** exponent``."""
    return format(Decimal(repr(float(value))).scaleb(exponent).normalize(), 'f')


def dump_wan_profile(profile: WanProfile) -> str:
    """Serialize a profile in the format read by ``load_wan_profile``."""
    lines = ['[dcs]']
    for dc in profile.dcs:
        lines.append(' '.join([
            dc.id, dc.region, _fmt(dc.store_price), _fmt(dc.read_price), _fmt(dc.write_price),
        ]))
    lines.append('[links]')
    for a in profile.dc_ids:
        for b in profile.dc_ids:
            if a == b:
                continue
            link = profile.links[(a, b)]
            lines.append(' '.join([
                a, b, _fmt(link.rtt_s, 3), _fmt(link.bandwidth_bps, -6), _fmt(link.transfer_price),
            ]))
    return '\n'.join(lines) + '\n'


def load_price_book(path) -> Dict[str, ProviderPrices]:
    """Read ``[prices]`` rows ``provider store read write transfer``."""
    path = Path(path)
    book = {}
    for section, line_no, tokens in _sections(path):
        if section != 'prices':
            raise WanParseError(path, line_no, f"unknown section [{section}]")
        if len(tokens) != 5:
            raise WanParseError(path, line_no, 'expected: provider store read write transfer')
        values = _numbers(path, line_no, tokens[1:])
        for name, value in zip(('store', 'read', 'write', 'transfer'), values):
            if value < 0:
                raise NegativePriceError(tokens[0], name, value)
        book[tokens[0]] = ProviderPrices(tokens[0], *values)
    return book
