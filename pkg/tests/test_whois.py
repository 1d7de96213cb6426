import datetime
import gzip
import io

import pytest

from geoaudit.errors import UnknownDialect, UnreadableStream
from geoaudit.registry import Rir, Status
from geoaudit.whois import (
    _parse_net_value,
    default_dialects,
    dialect_for,
    drop_circular_transfers,
    iter_raw_records,
    link_organizations,
    load_dialects,
    normalize_status,
    open_text,
    parse_bulk_whois,
    parse_date,
)

ARIN_DUMP = """\
#
# bulk copy
#

NetRange:       192.0.2.0 - 192.0.2.255
CIDR:           192.0.2.0/24
NetType:        Direct Allocation
OrgID:          EXAMPLE-1
Updated:        2020-05-04
RegDate:        1997-01-01

OrgID:          EXAMPLE-1
OrgName:        Example Networks LLC
Country:        US

NetRange:       192.0.2.0 - 192.0.2.255
NetType:        Direct Assignment
OrgID:          EXAMPLE-2
Updated:        2021-07-01

OrgID:          EXAMPLE-2
OrgName:        Example Hosting Inc
Country:        CA

NetRange:       10.0.0.0 - 10.0.0.11
NetType:        Reassignment
OrgID:          EXAMPLE-1
Updated:        2018-02-02

NetRange:       198.51.100.0 - 198.51.100.255
NetType:        Early Registrations
Comment:        Addresses in this block are not-managed-by this registry
Updated:        2015-01-01

NetRange:       256.1.2.3 - 256.1.2.5
NetType:        Direct Allocation
Updated:        2015-01-01

NetRange:       198.18.0.0 - 198.19.255.255
NetType:        Direct Allocation
OrgID:          EXAMPLE-1
Comment:        Transferred to APNIC on 2019-08-01
Updated:        2019-08-01

NetRange:       203.0.113.0 - 203.0.113.255
NetType:        Direct Allocation
OrgID:          EXAMPLE-1
Comment:        Transferred to RIPE
Updated:        2019-09-01

NetRange:       172.16.0.0 - 172.31.255.255
NetType:        Direct Allocation
OrgID:          EXAMPLE-A
Updated:        2020-01-01

NetRange:       172.16.0.0 - 172.31.255.255
NetType:        Direct Allocation
OrgID:          EXAMPLE-B
Updated:        2020-01-01

OrgID:          EXAMPLE-A
OrgName:        Alpha LLC
Country:        US

OrgID:          EXAMPLE-B
OrgName:        Beta SA
Country:        MX
"""

RIPE_DUMP = """\
% RIPE bulk data

inetnum:        193.0.0.0 - 193.0.0.255
netname:        EXAMPLE-NET
country:        NL
org:            ORG-EX1-RIPE
status:         ALLOCATED PA
mnt-by:         EXAMPLE-MNT
last-modified:  2021-06-01T08:00:00Z

organisation:   ORG-EX1-RIPE
org-name:       Example B.V.
country:        DE

inetnum:        193.0.2.0 - 193.0.2.255
netname:        GONE-NET
country:        NL
org:            ORG-GONE-RIPE
status:         ASSIGNED PI
last-modified:  2020-02-02T00:00:00Z

inet6num:       2001:db8::/32
org:            ORG-EX1-RIPE
status:         ALLOCATED-BY-RIR
last-modified:  2022-01-05T12:30:00Z

inetnum:        203.0.113.0 - 203.0.113.255
country:        NL
status:         ALLOCATED PA
remarks:        Transferred to ARIN
last-modified:  2019-10-01T00:00:00Z

inetnum:        193.0.4.0 - 193.0.4.255
country:        NL
status:         LEGACY
last-modified:  2017-03-03T00:00:00Z
"""

APNIC_DUMP = """\
inetnum:        203.0.112.0 - 203.0.113.255
country:        JP
status:         ASSIGNEd NON-PORTABLE
mnt-by:         MAINT-JP-EX
mnt-irt:        IRT-EX-JP
last-modified:  2019-03-03T00:00:00Z

inetnum:        202.12.28.0 - 202.12.28.255
descr:          Example Pacific
+               Sydney office
country:        AU
status:         ALLOCATED PORTABLE
last-modified:  2021-11-11T00:00:00Z

inetnum:        192.88.99.0 - 192.88.99.255
remarks:        early registration, not-managed-by this registry
country:        AU
status:         ALLOCATED PORTABLE
"""

LACNIC_DUMP = """\
inetnum:        45.5.160/22
status:         allocated
country:        BR
changed:        20180105

inetnum:        200.160.0.0/20
status:         assigned
country:        BR
changed:        noc@example.net 20190203
"""

AFRINIC_DUMP = """\
inetnum:        196.1.0.0 - 196.1.0.255
country:        SN
org:            ORG-AFEX-AFRINIC
status:         ASSIGNED PI
mnt-by:         AFEX-MNT
last-modified:  2020-09-09T00:00:00Z

organisation:   ORG-AFEX-AFRINIC
org-name:       Example Senegal
country:        SN
"""


def test_default_dialects_cover_all_rirs():
    dialects = default_dialects()
    assert set(dialects) == set(Rir)
    assert dialect_for(Rir.ARIN).net_keys == ("netrange", "cidr")
    assert dialect_for(Rir.APNIC).org_id_keys == ()
    with pytest.raises(UnknownDialect):
        dialect_for(Rir.RIPE, {})


def test_load_dialects_requires_net_keys():
    with pytest.raises(ValueError):
        load_dialects(io.StringIO("[arin]\nstatus_keys = NetType\n"))


def test_iter_raw_records_splitting():
    text = "% comment\n# more\na: 1\nb: 2\n  tail\n\nnot a pair\nc: 3\n"
    recs = list(iter_raw_records(io.StringIO(text)))
    assert len(recs) == 2
    assert recs[0].pairs == [("a", "1"), ("b", "2 tail")]
    assert recs[1].pairs == [("c", "3")]


def test_iter_raw_records_plus_continuation():
    text = "descr: line one\n+ line two\n"
    recs = list(iter_raw_records(io.StringIO(text)))
    assert recs[0].pairs == [("descr", "line one line two")]


@pytest.mark.parametrize(
    "raw,want",
    [
        ("Direct Allocation", Status.ALLOCATED),
        ("ALLOCATED PA", Status.ALLOCATED),
        ("ALLOCATED PORTABLE", Status.ALLOCATED),
        ("ALLOCATED-BY-RIR", Status.ALLOCATED),
        ("SUB-ALLOCATED PA", Status.ALLOCATED),
        ("Reallocation", Status.ALLOCATED),
        ("Direct Assignment", Status.ASSIGNED),
        ("ASSIGNED PI", Status.ASSIGNED),
        ("ASSIGNEd NON-PORTABLE", Status.ASSIGNED),
        ("Reassignment", Status.ASSIGNED),
        ("assigned", Status.ASSIGNED),
        ("LEGACY", Status.LEGACY_OR_UNKNOWN),
        ("", Status.LEGACY_OR_UNKNOWN),
        (None, Status.LEGACY_OR_UNKNOWN),
    ],
)
def test_normalize_status(raw, want):
    assert normalize_status(raw) is want


def test_parse_date_formats():
    assert parse_date("2020-05-04") == datetime.date(2020, 5, 4)
    assert parse_date("20180105") == datetime.date(2018, 1, 5)
    assert parse_date("2021-06-01T08:00:00Z") == datetime.date(2021, 6, 1)
    assert parse_date("2021-06-01 08:00:00") == datetime.date(2021, 6, 1)
    assert parse_date("noc@example.net 20190203") == datetime.date(2019, 2, 3)
    assert parse_date("2022-01-05T12:30:00.5+00:00") == datetime.date(2022, 1, 5)
    assert parse_date("soon") is None
    assert parse_date(None) is None
    assert parse_date("   ") is None


def test_parse_net_value_forms():
    blocks, src = _parse_net_value("192.0.2.0 - 192.0.2.255")
    assert [str(b) for b in blocks] == ["192.0.2.0/24"]
    assert src == "192.0.2.0-192.0.2.255"

    blocks, src = _parse_net_value("45.5.160/22")
    assert [str(b) for b in blocks] == ["45.5.160.0/22"]
    assert src is None

    blocks, _ = _parse_net_value("2001:db8::/32")
    assert [str(b) for b in blocks] == ["2001:db8::/32"]

    blocks, _ = _parse_net_value("198.51.100.7")
    assert [str(b) for b in blocks] == ["198.51.100.7/32"]

    blocks, src = _parse_net_value("10.0.0.0-10.0.0.11")
    assert [str(b) for b in blocks] == ["10.0.0.0/29", "10.0.0.8/30"]
    assert src == "10.0.0.0-10.0.0.11"


def test_parse_arin_dump():
    regs, orgs, report = parse_bulk_whois(io.StringIO(ARIN_DUMP), Rir.ARIN)

    assert report.net_records_read == 9
    assert report.org_records_read == 4
    assert report.not_managed_skipped == 1
    assert report.malformed_skipped == 1
    assert report.non_cidr_ranges_split == 1
    assert report.split_extra_blocks == 1
    assert report.duplicates_dropped == 2
    assert report.registrations_emitted == 6
    assert report.check_identity()

    by_prefix = {str(r.prefix): r for r in regs}
    assert sorted(by_prefix) == [
        "10.0.0.0/29", "10.0.0.8/30", "172.16.0.0/12",
        "192.0.2.0/24", "198.18.0.0/15", "203.0.113.0/24",
    ]
    # newest record wins the duplicate
    assert by_prefix["192.0.2.0/24"].org_id == "EXAMPLE-2"
    assert by_prefix["192.0.2.0/24"].status is Status.ASSIGNED
    assert by_prefix["192.0.2.0/24"].last_updated == datetime.date(2021, 7, 1)
    # date tie falls to the larger org id
    assert by_prefix["172.16.0.0/12"].org_id == "EXAMPLE-B"
    # range split marks both blocks and keeps the source range
    for p in ("10.0.0.0/29", "10.0.0.8/30"):
        assert "split_from_range" in by_prefix[p].flags
        assert by_prefix[p].source_range == "10.0.0.0-10.0.0.11"
    # transfer annotations become flags
    assert "transfer_to:APNIC" in by_prefix["198.18.0.0/15"].flags
    assert "transfer_to:RIPE" in by_prefix["203.0.113.0/24"].flags

    assert set(orgs) == {"EXAMPLE-1", "EXAMPLE-2", "EXAMPLE-A", "EXAMPLE-B"}
    assert orgs["EXAMPLE-1"].country == "US"
    assert orgs["EXAMPLE-B"].country == "MX"

    assert report.status_variants_seen["Direct Allocation"] == "allocated"
    assert report.status_variants_seen["Reassignment"] == "assigned"


def test_parse_ripe_dump_and_org_linking():
    regs, orgs, report = parse_bulk_whois(io.StringIO(RIPE_DUMP), Rir.RIPE)
    assert report.net_records_read == 5
    assert report.org_records_read == 1
    assert report.registrations_emitted == 5
    assert report.check_identity()

    linked, unresolved = link_organizations(regs, orgs)
    assert unresolved == 1
    by_prefix = {str(r.prefix): r for r in linked}

    # the org record's country beats the inline one
    assert by_prefix["193.0.0.0/24"].org_country == "DE"
    assert "mnt:EXAMPLE-MNT" in by_prefix["193.0.0.0/24"].flags
    # dangling reference keeps the inline country and gets flagged
    assert by_prefix["193.0.2.0/24"].org_country == "NL"
    assert "org_unresolved" in by_prefix["193.0.2.0/24"].flags
    assert by_prefix["2001:db8::/32"].status is Status.ALLOCATED
    assert by_prefix["193.0.4.0/24"].status is Status.LEGACY_OR_UNKNOWN
    assert by_prefix["193.0.4.0/24"].last_updated == datetime.date(2017, 3, 3)


def test_parse_apnic_dump_inline_country_only():
    regs, orgs, report = parse_bulk_whois(io.StringIO(APNIC_DUMP), Rir.APNIC)
    assert orgs == {}
    assert report.net_records_read == 3
    assert report.not_managed_skipped == 1
    assert report.registrations_emitted == 2
    assert report.check_identity()

    by_prefix = {str(r.prefix): r for r in regs}
    rec = by_prefix["203.0.112.0/23"]
    assert rec.org_country == "JP"
    assert rec.status is Status.ASSIGNED
    assert "mnt:MAINT-JP-EX" in rec.flags
    assert "mnt:IRT-EX-JP" in rec.flags
    assert by_prefix["202.12.28.0/24"].org_country == "AU"


def test_parse_lacnic_dump_short_prefixes_and_changed_dates():
    regs, _, report = parse_bulk_whois(io.StringIO(LACNIC_DUMP), Rir.LACNIC)
    assert report.registrations_emitted == 2
    assert report.check_identity()
    by_prefix = {str(r.prefix): r for r in regs}
    assert by_prefix["45.5.160.0/22"].last_updated == datetime.date(2018, 1, 5)
    assert by_prefix["200.160.0.0/20"].last_updated == datetime.date(2019, 2, 3)
    assert by_prefix["45.5.160.0/22"].status is Status.ALLOCATED


def test_parse_afrinic_dump():
    regs, orgs, report = parse_bulk_whois(io.StringIO(AFRINIC_DUMP), Rir.AFRINIC)
    linked, unresolved = link_organizations(regs, orgs)
    assert unresolved == 0
    assert linked[0].org_country == "SN"
    assert report.check_identity()


def test_drop_circular_transfers():
    arin_regs, _, _ = parse_bulk_whois(io.StringIO(ARIN_DUMP), Rir.ARIN)
    ripe_regs, _, _ = parse_bulk_whois(io.StringIO(RIPE_DUMP), Rir.RIPE)
    kept, circular, transferred = drop_circular_transfers(
        {Rir.ARIN: arin_regs, Rir.RIPE: ripe_regs})

    # 203.0.113.0/24 is claimed transferred in both directions: both sides drop
    assert circular == {Rir.ARIN: 1, Rir.RIPE: 1}
    # 198.18.0.0/15 is a one-way annotation: dropped from the source only
    assert transferred == {Rir.ARIN: 1, Rir.RIPE: 0}
    arin_prefixes = {str(r.prefix) for r in kept[Rir.ARIN]}
    ripe_prefixes = {str(r.prefix) for r in kept[Rir.RIPE]}
    assert "203.0.113.0/24" not in arin_prefixes
    assert "203.0.113.0/24" not in ripe_prefixes
    assert "198.18.0.0/15" not in arin_prefixes
    assert "192.0.2.0/24" in arin_prefixes
    assert "193.0.0.0/24" in ripe_prefixes


def test_open_text_reads_gzip_transparently(tmp_path):
    plain = tmp_path / "dump.txt"
    plain.write_text(ARIN_DUMP)
    packed = tmp_path / "dump.txt.gz"
    packed.write_bytes(gzip.compress(ARIN_DUMP.encode()))

    with open_text(str(plain)) as fp:
        regs_a, _, _ = parse_bulk_whois(fp, Rir.ARIN)
    with open_text(str(packed)) as fp:
        regs_b, _, _ = parse_bulk_whois(fp, Rir.ARIN)
    assert [str(r.prefix) for r in regs_a] == [str(r.prefix) for r in regs_b]


def test_corrupt_gzip_raises_unreadable(tmp_path):
    bad = tmp_path / "dump.gz"
    bad.write_bytes(b"\x1f\x8b\x08" + b"garbage-not-gzip-payload")
    with open_text(str(bad)) as fp:
        with pytest.raises(UnreadableStream):
            list(iter_raw_records(fp))
