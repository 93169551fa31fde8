import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from skymine.catalog import (CatalogSchema, ColumnMeta, SourceRecord, key_matrix, parse_catalog,
                             read_store, write_store)
from skymine.errors import (CorruptHeader, MissingColumn, PageOverflow, PositionOutOfRange, SchemaError,
                            TypeMismatch, UnitMismatch)

SCHEMA = CatalogSchema((
    ColumnMeta("id", "generic", None, "i64"),
    ColumnMeta("ra", "angle", "deg"),
    ColumnMeta("dec", "angle", "deg"),
    ColumnMeta("mag", "magnitude", "mag"),
    ColumnMeta("mag_err", "error", "mag", error_of="mag"),
    ColumnMeta("name", "generic", None, "string"),
))


def test_parse_basic_and_ra_wrap():
    text = "id,ra,dec,mag,mag_err,name\n1,370.5,-10,15.2,0.1,alpha\n2,-30,89.9,20,0.5,beta\n"
    recs = parse_catalog(text, SCHEMA)
    assert recs[0].values == (1, 10.5, -10.0, 15.2, 0.1, "alpha")
    assert recs[1].values[1] == pytest.approx(330.0)


def test_columns_can_appear_in_any_order():
    text = "name,mag,mag_err,dec,ra,id\nx,1,0.1,2,3,4\n"
    assert parse_catalog(text, SCHEMA)[0].values == (4, 3.0, 2.0, 1.0, 0.1, "x")


def test_radian_columns_convert_to_degrees():
    schema = CatalogSchema((ColumnMeta("ra", "angle", "rad"), ColumnMeta("dec", "angle", "rad")))
    rec = parse_catalog(f"ra,dec\n{math.pi},{math.pi / 4}\n", schema)[0]
    assert rec.values == pytest.approx((180.0, 45.0))
    assert schema.canonical().column("ra").unit == "deg"


def test_type_mismatch_reports_data_line_and_column():
    text = "# comment\nid,ra,dec,mag,mag_err,name\n1,1,1,1,1,a\n2,1,1,oops,1,b\n"
    with pytest.raises(TypeMismatch) as exc:
        parse_catalog(text, SCHEMA)
    assert exc.value.line == 2 and exc.value.column == "mag"


def test_dec_out_of_range():
    with pytest.raises(PositionOutOfRange) as exc:
        parse_catalog("id,ra,dec,mag,mag_err,name\n1,1,91,1,1,a\n", SCHEMA)
    assert exc.value.line == 1


def test_header_unit_tags():
    ok = "id,ra[deg],dec[deg],mag,mag_err,name\n1,1,1,1,1,a\n"
    assert len(parse_catalog(ok, SCHEMA)) == 1
    with pytest.raises(UnitMismatch):
        parse_catalog(ok.replace("ra[deg]", "ra[rad]"), SCHEMA)


def test_missing_column():
    with pytest.raises(MissingColumn):
        parse_catalog("id,ra,dec\n1,1,1\n", SCHEMA)


def test_schema_validation():
    with pytest.raises(SchemaError):
        CatalogSchema((ColumnMeta("ra", "angle", "deg"), ColumnMeta("ra", "angle", "deg")))
    with pytest.raises(SchemaError):
        CatalogSchema((ColumnMeta("ra", "angle", "deg"), ColumnMeta("dec", "angle", "deg"),
                       ColumnMeta("e", "error", "mag", error_of="nope")))
    with pytest.raises(UnitMismatch):
        CatalogSchema((ColumnMeta("ra", "angle", "furlong"), ColumnMeta("dec", "angle", "deg")))


def test_schema_json_roundtrip():
    assert CatalogSchema.from_dict(SCHEMA.to_dict()) == SCHEMA


names = st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=0x2FF, blacklist_characters=","),
                max_size=40)
rows = st.lists(st.tuples(st.integers(-2**62, 2**62), st.floats(0, 359.999), st.floats(-90, 90),
                          st.floats(-5, 30), st.floats(0, 2), names), max_size=300)


@given(rows, st.sampled_from([512, 1024, 4096]))
def test_store_roundtrip(tmp_path_factory, data, page_size):
    path = tmp_path_factory.mktemp("s") / "c.skyf"
    recs = [SourceRecord(r) for r in data]
    written = write_store(recs, SCHEMA, path, page_size)
    back = read_store(path)
    assert back.schema == SCHEMA
    assert [r.values for r in back.records] == [r.values for r in recs]
    assert back.page_counts == written.page_counts
    assert path.stat().st_size % page_size == 0


def test_store_pages_fill_in_order(tmp_path):
    recs = [SourceRecord((i, 1.0, 2.0, 3.0, 0.1, "n" * (i % 7))) for i in range(500)]
    st_ = write_store(recs, SCHEMA, tmp_path / "a.skyf", 512)
    assert sum(st_.page_counts) == 500 and len(st_.page_counts) > 1
    assert read_store(tmp_path / "a.skyf").column("id").tolist() == list(range(500))


def test_corrupt_store_detected(tmp_path):
    p = tmp_path / "a.skyf"
    write_store([SourceRecord((1, 1.0, 1.0, 1.0, 0.1, "x"))], SCHEMA, p, 512)
    data = bytearray(p.read_bytes())
    p.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(CorruptHeader):
        read_store(p)
    p.write_bytes(bytes(data[:-1]))
    with pytest.raises(CorruptHeader):
        read_store(p)


def test_key_matrix_xyz_is_unit(tmp_path):
    recs = [SourceRecord((i, 10.0 * i, 5.0 * i - 40, 1.0, 0.1, "")) for i in range(10)]
    store = write_store(recs, SCHEMA, tmp_path / "a.skyf", 4096)
    xyz = key_matrix(store, ["xyz"])
    assert xyz.shape == (10, 3)
    assert np.allclose(np.linalg.norm(xyz, axis=1), 1.0)
    with pytest.raises(TypeMismatch):
        key_matrix(store, ["name"])


def test_schema_larger_than_page_rejected(tmp_path):
    with pytest.raises(PageOverflow):
        write_store([], SCHEMA, tmp_path / "a.skyf", 256)
