"""
Tests for the WAN model.
"""
import math

from django.test import SimpleTestCase

from geolayer.conf import bundled_path
from geolayer.exceptions import (
    EmptyServingMapError,
    MissingLinkError,
    NegativePriceError,
    UnknownDCError,
    WanParseError,
    ZeroBandwidthError,
)
from geolayer.wan import (
    DataCenter,
    dump_wan_profile,
    load_price_book,
    load_wan_profile,
)

from .fixtures import TempDirMixin, write_files

TWO_DC = """[dcs]
A a-1 0.016 0.1 1.4
B b-1 0.016 0.1 1.4
[links]
A B 40 100 0.043
B A 40 100 0.043
"""


class RequestLatencyTests(SimpleTestCase):
    """Test request and pattern latency."""

    def setUp(self):
        self.wan = load_wan_profile(bundled_path('alibaba-5dc.wan'))

    def test_rtt_plus_transfer(self):
        """Test 12 MB from US West to US East takes 69 ms plus 1 s."""
        latency = self.wan.request_latency('USEast', 'USWest', 12 * 10 ** 6)
        self.assertAlmostEqual(latency, 1.069, places=12)

    def test_empty_payload_is_rtt(self):
        """Test a zero payload costs exactly the RTT."""
        self.assertEqual(self.wan.request_latency('USEast', 'London', 0), 0.08)

    def test_local_access_is_free(self):
        """Test same-DC access has zero latency for any payload."""
        self.assertEqual(self.wan.request_latency('London', 'London', 10 ** 9), 0.0)

    def test_unknown_dc(self):
        """Test an unknown DC raises UnknownDCError."""
        with self.assertRaises(UnknownDCError):
            self.wan.request_latency('Mars', 'London', 0)

    def test_monotone_in_payload(self):
        """Test latency does not decrease as the payload grows."""
        values = [self.wan.request_latency('Beijing', 'London', s) for s in range(0, 10 ** 7, 10 ** 6)]
        self.assertEqual(values, sorted(values))

    def test_pattern_latency_single_server(self):
        """Test one serving DC gives its request latency."""
        self.assertEqual(
            self.wan.pattern_latency('USEast', {'London': 5000}),
            self.wan.request_latency('USEast', 'London', 5000),
        )

    def test_pattern_latency_is_straggler(self):
        """Test three servers give the maximum of their request latencies."""
        serving = {'USWest': 10 ** 6, 'London': 2 * 10 ** 6, 'Singapore': 0}
        expected = max(
            0.069 + 8e6 / 96e6,
            0.080 + 16e6 / 92e6,
            0.225,
        )
        self.assertAlmostEqual(self.wan.pattern_latency('USEast', serving), expected, places=12)

    def test_pattern_latency_superset(self):
        """Test merging serving maps never lowers the straggler latency."""
        m1 = {'London': 1000}
        m2 = {'London': 5000, 'Beijing': 10}
        merged = {'London': 6000, 'Beijing': 10}
        self.assertGreaterEqual(
            self.wan.pattern_latency('USEast', merged),
            max(self.wan.pattern_latency('USEast', m1), self.wan.pattern_latency('USEast', m2)),
        )

    def test_empty_serving_map(self):
        """Test an empty serving map raises EmptyServingMapError."""
        with self.assertRaises(EmptyServingMapError):
            self.wan.pattern_latency('USEast', {})


class LoadProfileTests(TempDirMixin, SimpleTestCase):
    """Test profile and price book files."""

    def test_bundled_measurements(self):
        """Test the bundled profile holds Singapore-Beijing at 75 ms and 96 Mbps."""
        wan = load_wan_profile(bundled_path('alibaba-5dc.wan'))
        link = wan.link('Singapore', 'Beijing')

        self.assertEqual(link.rtt_s, 0.075)
        self.assertEqual(link.bandwidth_bps, 96e6)
        self.assertEqual(wan.link('Beijing', 'Singapore'), link)
        self.assertEqual(len(wan.dc_ids), 5)

    def test_self_link(self):
        """Test the self link has zero RTT, infinite bandwidth and no price."""
        wan = load_wan_profile(bundled_path('alibaba-5dc.wan'))
        link = wan.link('London', 'London')

        self.assertEqual(link.rtt_s, 0.0)
        self.assertTrue(math.isinf(link.bandwidth_bps))
        self.assertEqual(link.transfer_price, 0.0)

    def test_bundled_alibaba_prices(self):
        """Test the bundled price book has the Alibaba row."""
        book = load_price_book(bundled_path('alibaba-prices.txt'))
        alibaba = book['Alibaba']

        self.assertEqual(
            (alibaba.store_price, alibaba.read_price, alibaba.write_price, alibaba.transfer_price),
            (0.016, 0.10, 1.40, 0.043),
        )
        self.assertEqual(len(book), 5)

    def test_with_prices_applies_provider(self):
        """Test applying a provider reprices every DC and link."""
        wan = load_wan_profile(bundled_path('alibaba-5dc.wan'))
        book = load_price_book(bundled_path('alibaba-prices.txt'))
        amazon = wan.with_prices(book, 'Amazon')

        self.assertEqual(amazon.dc('London').store_price, 0.023)
        self.assertEqual(amazon.transfer_price('USEast', 'Beijing'), 0.050)
        self.assertEqual(amazon.link('USEast', 'Beijing').rtt_s, 0.226)

    def test_dump_round_trip(self):
        """Test a symmetric two-DC profile dumps back byte-identical."""
        path = write_files(self.tmp, **{'two.wan': TWO_DC})['two.wan']
        self.assertEqual(dump_wan_profile(load_wan_profile(path)), TWO_DC)

    def test_dump_keeps_full_precision(self):
        """Test latencies, bandwidths and prices finer than six digits survive a dump and reload."""
        text = TWO_DC.replace('A B 40 100 0.043', 'A B 40.0123456789 100.123456789 0.0431234567')
        path = write_files(self.tmp, **{'fine.wan': text})['fine.wan']
        wan = load_wan_profile(path)
        dumped = dump_wan_profile(wan)
        self.assertIn('A B 40.0123456789 100.123456789 0.0431234567', dumped)

        again = load_wan_profile(write_files(self.tmp, **{'again.wan': dumped})['again.wan'])
        self.assertEqual(again.link('A', 'B'), wan.link('A', 'B'))
        self.assertEqual(again.link('A', 'B').rtt_s, 0.0400123456789)

    def test_missing_pair(self):
        """Test a DC without links is a missing-pair error."""
        text = TWO_DC.replace('[links]', 'C c-1 0.016 0.1 1.4\n[links]')
        path = write_files(self.tmp, **{'bad.wan': text})['bad.wan']

        with self.assertRaises(MissingLinkError):
            load_wan_profile(path)

    def test_zero_bandwidth(self):
        """Test a zero-bandwidth link is rejected."""
        path = write_files(self.tmp, **{'bad.wan': TWO_DC.replace('40 100', '40 0')})['bad.wan']

        with self.assertRaises(ZeroBandwidthError):
            load_wan_profile(path)

    def test_negative_price(self):
        """Test a negative storage price is rejected."""
        path = write_files(self.tmp, **{'bad.wan': TWO_DC.replace('A a-1 0.016', 'A a-1 -0.016')})['bad.wan']

        with self.assertRaises(NegativePriceError):
            load_wan_profile(path)

    def test_parse_error_names_line(self):
        """Test a short row reports its line number."""
        path = write_files(self.tmp, **{'bad.wan': "[dcs]\nA a-1 0.016\n"})['bad.wan']

        with self.assertRaises(WanParseError) as ctx:
            load_wan_profile(path)
        self.assertEqual(ctx.exception.line_no, 2)

    def test_negative_dc_price_constructor(self):
        """Test DataCenter validates its prices."""
        with self.assertRaises(NegativePriceError):
            DataCenter('A', 'a', store_price=0.1, read_price=-1, write_price=0)
