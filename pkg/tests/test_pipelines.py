import json

import numpy as np
import pytest

from pmnet import (
    ConfigError,
    Dataset,
    DomainError,
    FeatureMap,
    PairPolicy,
    ParamBlocks,
    ParseError,
    Partition,
    build_pair_index,
    cross_group_edges,
    fit,
    lambda_max,
)
from pmnet.pipelines import (
    RunManifest,
    SequencePairConfig,
    build_vote_dataset,
    canonical_feature_name,
    encode_symbols,
    export_edges,
    feature_by_name,
    fit_from_json,
    fit_to_json,
    load_csv_dataset,
    load_manifest,
    parse_partition_spec,
    partition_spec_string,
    path_to_json,
    save_csv_dataset,
    truth_from_json,
    truth_to_json,
    window_count,
    window_sequences,
    write_manifest,
)

from conftest import make_dataset


class TestFeatureNames:
    def test_mapping(self):
        assert feature_by_name("product").kind == "product"
        assert feature_by_name("sq").kind == "squared_product"
        assert feature_by_name("squared_product").kind == "squared_product"
        assert feature_by_name("delta").kind == "kronecker_delta"
        assert feature_by_name("delta", categories=4).categories == 4

    def test_unknown(self):
        with pytest.raises(ParseError):
            feature_by_name("cubic")

    def test_canonical_roundtrip(self):
        for name in ("product", "squared_product", "kronecker_delta"):
            assert canonical_feature_name(feature_by_name(name)) == name


class TestPartitionGrammar:
    def test_ranges(self):
        p = parse_partition_spec("1-40|41-50", 50)
        assert p.group1 == tuple(range(40))
        assert p.group2 == tuple(range(40, 50))

    def test_lists_and_mixed(self):
        p = parse_partition_spec("1,3|2,4-5", 5)
        assert p.group1 == (0, 2)
        assert p.group2 == (1, 3, 4)

    def test_header_names(self):
        p = parse_partition_spec("a,c|b", 3, headers=["a", "b", "c"])
        assert p.group1 == (0, 2)
        assert p.group2 == (1,)

    def test_errors(self):
        with pytest.raises(ParseError, match="exactly one"):
            parse_partition_spec("1-2", 4)
        with pytest.raises(ParseError, match="overlap"):
            parse_partition_spec("1-3|3-4", 4)
        with pytest.raises(ParseError, match="missing"):
            parse_partition_spec("1-2|4", 4)
        with pytest.raises(ParseError, match="outside"):
            parse_partition_spec("1-9|10", 4)
        with pytest.raises(ParseError, match="header"):
            parse_partition_spec("a|b", 2)
        with pytest.raises(ParseError):
            parse_partition_spec("1,,2|3", 3)

    def test_spec_string_roundtrip(self):
        for spec, m in (("1-40|41-50", 50), ("1,3|2,4-5", 5), ("2-3|1,4", 4)):
            p = parse_partition_spec(spec, m)
            assert parse_partition_spec(partition_spec_string(p), m) == p


class TestCsvDatasets:
    def test_roundtrip_full_precision(self, tmp_path):
        data = make_dataset(9, 2, 3, seed=61)
        path = tmp_path / "d.csv"
        save_csv_dataset(data, str(path))
        back = load_csv_dataset(str(path), "1-2|3-5")
        np.testing.assert_array_equal(back.samples, data.samples)

    def test_header_rows(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text("x,y,z\n1,2,3\n4,5,6\n")
        data = load_csv_dataset(str(path), "x|y,z")
        assert data.m == 3
        assert data.partition.group1 == (0,)

    def test_error_locations(self, tmp_path):
        ragged = tmp_path / "r.csv"
        ragged.write_text("1,2\n3\n")
        with pytest.raises(ParseError, match="line 2"):
            load_csv_dataset(str(ragged), "1|2")
        bad = tmp_path / "b.csv"
        bad.write_text("1,2\n3,oops\n")
        with pytest.raises(ParseError, match=r"line 2, column 2"):
            load_csv_dataset(str(bad), "1|2")
        empty = tmp_path / "e.csv"
        empty.write_text("\n")
        with pytest.raises(ParseError, match="empty"):
            load_csv_dataset(str(empty), "1|2")


class TestVotes:
    def votes(self):
        return np.array([[1, -1, 0, 1], [-1, 1, 1, -1], [1, 1, -1, 0]])

    def test_regroups_by_party(self):
        ids = ["s1", "s2", "s3", "s4"]
        party = {"s1": "R", "s2": "D", "s3": "R", "s4": "D"}
        data, ordered = build_vote_dataset(self.votes(), ids, party)
        assert ordered == ["s2", "s4", "s1", "s3"]  # D block first (sorted labels)
        assert data.partition.group1 == (0, 1)
        np.testing.assert_array_equal(data.samples[:, 0], self.votes()[:, 1])

    def test_bad_cell_names_question_and_member(self):
        v = self.votes()
        v[1, 2] = 5
        with pytest.raises(DomainError, match=r"question 2, member 's3'"):
            build_vote_dataset(v, ["s1", "s2", "s3", "s4"], {f"s{i}": "DR"[i % 2] for i in range(1, 5)})

    def test_duplicate_and_missing_ids(self):
        party = {"a": "D", "b": "R"}
        with pytest.raises(ConfigError, match="duplicate"):
            build_vote_dataset(np.zeros((2, 2)), ["a", "a"], party)
        with pytest.raises(ConfigError, match="missing party"):
            build_vote_dataset(np.zeros((2, 2)), ["a", "c"], party)

    def test_two_party_guard(self):
        with pytest.raises(ConfigError, match="two parties"):
            build_vote_dataset(
                np.zeros((2, 3)), ["a", "b", "c"], {"a": "D", "b": "R", "c": "I"}
            )


class TestSequences:
    def test_window_count(self):
        cfg = SequencePairConfig(window=4, step=2)
        assert window_count(10, cfg) == 4
        assert window_count(4, cfg) == 1
        with pytest.raises(ConfigError):
            window_count(3, cfg)

    def test_config_guards(self):
        with pytest.raises(ConfigError):
            SequencePairConfig(window=1)
        with pytest.raises(ConfigError):
            SequencePairConfig(window=3, step=0)
        with pytest.raises(ConfigError):
            SequencePairConfig(window=3, alphabet="dna")

    def test_encode_symbols_sorted(self):
        a, b, codebook = encode_symbols("bca", "aad")
        assert codebook == {"a": 0, "b": 1, "c": 2, "d": 3}
        np.testing.assert_array_equal(a, [1, 2, 0])
        np.testing.assert_array_equal(b, [0, 0, 3])

    def test_window_layout_real(self):
        seq1 = np.arange(6.0)
        seq2 = np.arange(10.0, 15.0)
        cfg = SequencePairConfig(window=3, step=1)
        data = window_sequences(seq1, seq2, cfg)
        assert data.n == 3  # in-window offsets are the samples
        assert len(data.partition.group1) == 4
        assert len(data.partition.group2) == 3
        np.testing.assert_array_equal(data.samples[:, 0], [0, 1, 2])
        np.testing.assert_array_equal(data.samples[:, 1], [1, 2, 3])
        np.testing.assert_array_equal(data.samples[:, 4], [10, 11, 12])

    def test_window_layout_coded(self):
        data = window_sequences("abcab", "bbab", SequencePairConfig(window=3, alphabet="coded"))
        assert data.domain_tag == "categorical"
        assert data.categories == 3
        assert data.n == 3


class TestEdgeExport:
    def edges(self):
        idx = build_pair_index(4)
        flat = np.zeros(idx.dim)
        flat[idx.position((0, 2))] = 0.8
        flat[idx.position((1, 3))] = -0.2
        theta = ParamBlocks(flat, idx)
        return cross_group_edges(theta, Partition((0, 1), (2, 3)))

    def test_dot_output(self, tmp_path):
        path = tmp_path / "e.dot"
        export_edges(self.edges(), "dot", str(path), labels=["a", "b", "c", "d"])
        text = path.read_text()
        assert text.startswith("graph edges {")
        assert '"a" -- "c" [color=red, penwidth=4.000' in text
        assert '"b" -- "d" [color=blue' in text

    def test_json_output(self, tmp_path):
        path = tmp_path / "e.json"
        export_edges(self.edges(), "json", str(path))
        payload = json.loads(path.read_text())
        assert payload["format_version"] == 1
        assert payload["edges"][0]["weight"] == pytest.approx(0.8)
        assert payload["edges"][1]["sign"] == -1

    def test_csv_output_and_determinism(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        export_edges(self.edges(), "csv", str(p1))
        export_edges(self.edges(), "csv", str(p2))
        assert p1.read_text() == p2.read_text()
        lines = p1.read_text().splitlines()
        assert lines[0] == "u,v,u_label,v_label,weight,sign"
        assert lines[1].startswith("0,2,0,2,0.8,")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ParseError):
            export_edges(self.edges(), "svg", str(tmp_path / "x"))


class TestModelSerialization:
    def fit_small(self):
        data = make_dataset(20, 2, 2, seed=71)
        f = FeatureMap.product()
        lam = 0.4 * lambda_max(data, f, pair_policy=PairPolicy(kind="all_ordered"))
        return data, f, fit(data, f, lam, pair_policy=PairPolicy(kind="all_ordered"))

    def test_fit_roundtrip(self, tmp_path):
        data, f, result = self.fit_small()
        path = tmp_path / "fit.json"
        fit_to_json(result, data.partition, f, str(path), extras={"note": 1})
        theta, partition, feature, payload = fit_from_json(str(path))
        np.testing.assert_allclose(theta.flat, result.theta_hat.flat, atol=1e-15)
        assert partition == data.partition
        assert feature.kind == "product"
        assert payload["note"] == 1
        assert payload["support_size"] == len(result.theta_hat.nonzero_pairs())
        assert payload["lambda"] == result.lam

    def test_path_payload(self, tmp_path):
        from pmnet import GeometricSchedule, lambda_path

        data = make_dataset(20, 2, 2, seed=73)
        f = FeatureMap.product()
        res = lambda_path(data, f, GeometricSchedule(factor=0.5, count=3), pair_policy=PairPolicy(kind="all_ordered"))
        path = tmp_path / "path.json"
        path_to_json(res, data.partition, f, str(path))
        payload = json.loads(path.read_text())
        assert payload["stop_reason"] == "grid_exhausted"
        assert len(payload["entries"]) == 3
        e = payload["entries"][0]
        assert set(e) == {"lambda", "support_size", "support", "objective", "converged"}

    def test_truth_roundtrip(self, tmp_path):
        from pmnet import support_from_pairs

        idx = build_pair_index(6)
        truth = support_from_pairs([(0, 4), (1, 5)], idx)
        path = tmp_path / "truth.json"
        truth_to_json(truth, 6, str(path))
        back = truth_from_json(str(path))
        assert back.active == truth.active
        assert back.universe == idx.pairs


class TestManifests:
    def test_payload_fields(self):
        man = RunManifest("fit", ["fit", "--data", "x.csv"], 3, {"data": "x.csv"}, {"fit": "f.json"})
        payload = man.to_payload()
        assert payload["tool"] == "pmnet"
        assert payload["format_version"] == 1
        assert payload["argv"] == ["fit", "--data", "x.csv"]
        assert payload["seed"] == 3

    def test_write_and_load(self, tmp_path):
        out = tmp_path / "out.csv"
        man = RunManifest("gen gaussian", ["gen"], 0, {}, {"data": str(out)})
        write_manifest(man, str(out))
        loaded = load_manifest(str(out) + ".manifest.json")
        assert loaded["command"] == "gen gaussian"
        assert loaded["version"]
