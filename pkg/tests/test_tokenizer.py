import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from querc.tokenizer import (
    EOS_ID,
    PAD_ID,
    SOS_ID,
    UNK_ID,
    SPECIAL_TOKENS,
    TokenizerOptions,
    TokenSequence,
    Vocabulary,
    build_vocabulary,
    encode,
    tokenize,
)


def toks(text, **kw):
    return list(tokenize(text, TokenizerOptions(**kw)).tokens)


def test_spec_examples():
    assert toks("SELECT a FROM t WHERE x = 5") == ["select", "a", "from", "t", "where", "x", "=", "<num>"]
    assert toks("select * from T where n = 'bob'") == ["select", "*", "from", "t", "where", "n", "=", "<str>"]


def test_truncation_records_source_length():
    text = "select " + ", ".join(f"c{i}" for i in range(300)) + " from t"
    seq = tokenize(text, TokenizerOptions(max_sequence_length=256))
    assert len(seq.tokens) == 256
    assert seq.source_length == 1 + 300 + 299 + 2  # select, idents, commas, from t
    assert seq.source_length == len(tokenize(text, TokenizerOptions(max_sequence_length=10_000)).tokens)


def test_comments_stripped():
    assert toks("SELECT a /* c1 */ FROM t -- tail\n WHERE x=1") == [
        "select", "a", "from", "t", "where", "x", "=", "<num>",
    ]


def test_quoted_identifiers_keep_case_quotes_stripped():
    assert toks('SELECT "MyCol" FROM `MyTab`') == ["select", "MyCol", "from", "mytab".replace("mytab", "MyTab")]


def test_literals_kept_when_normalization_off():
    assert toks("select n from t where a = 'bob' and b = 1.5e3", normalize_literals=False) == [
        "select", "n", "from", "t", "where", "a", "=", "'bob'", "and", "b", "=", "1.5e3",
    ]


def test_placeholders_survive_retokenization():
    assert toks("select <num>, <str> from t") == ["select", "<num>", ",", "<str>", "from", "t"]


def test_two_char_operators_and_punctuation():
    assert toks("a >= 1 and b <> 2 or c || d") == [
        "a", ">=", "<num>", "and", "b", "<>", "<num>", "or", "c", "||", "d",
    ]


def test_opaque_runs_pass_through():
    assert toks("select @@ROWCOUNT, :param") == ["select", "@@ROWCOUNT", ",", ":", "param"]


def test_empty_query_rejected():
    with pytest.raises(ValueError):
        tokenize("   ")


def test_unterminated_string_tolerated():
    assert toks("select 'oops from t") == ["select", "<str>"]


_sql_fragment = st.lists(
    st.sampled_from(
        ["select", "from", "where", "group", "by", "t1", "col_a", "col_b", "*", ",", "=",
         "<num>", "<str>", ">=", "(", ")", "and", "or", "join", "on", "7", "'txt'"]
    ),
    min_size=1,
    max_size=40,
)


@given(_sql_fragment)
@settings(max_examples=200, deadline=None)
def test_tokenize_idempotent_on_joined_output(parts):
    seq = tokenize(" ".join(parts))
    again = tokenize(" ".join(seq.tokens))
    assert again.tokens == seq.tokens


@given(_sql_fragment)
@settings(max_examples=100, deadline=None)
def test_encode_preserves_length(parts):
    seq = tokenize(" ".join(parts))
    vocab = build_vocabulary([seq], min_count=1)
    assert encode(vocab, seq).shape[0] == len(seq.tokens)


def seq_of(*tokens):
    return TokenSequence(tuple(tokens), len(tokens))


def test_vocabulary_counting_and_cutoff():
    vocab = build_vocabulary([seq_of("a", "b", "a")], min_count=1)
    assert vocab.tokens[:4] == SPECIAL_TOKENS
    assert vocab.tokens[4:] == ("a", "b")
    assert vocab.frequencies[4:] == (2, 1)

    vocab2 = build_vocabulary([seq_of("a", "b", "a")], min_count=2)
    assert "b" not in vocab2
    assert vocab2.frequencies[UNK_ID] == 1  # dropped mass


def test_vocabulary_tie_break_lexicographic():
    vocab = build_vocabulary([seq_of("beta", "alpha")], min_count=1)
    assert vocab.tokens[4:] == ("alpha", "beta")


def test_vocabulary_deterministic_under_record_order():
    seqs = [seq_of("a", "b"), seq_of("b", "c", "c")]
    v1 = build_vocabulary(seqs, min_count=1)
    v2 = build_vocabulary(list(reversed(seqs)), min_count=1)
    assert v1 == v2


def test_vocabulary_empty_corpus_error():
    with pytest.raises(ValueError):
        build_vocabulary([], min_count=1)


def test_encode_unknowns_and_empty():
    vocab = build_vocabulary([seq_of("a", "b")], min_count=1)
    ids = encode(vocab, seq_of("a", "zzz"))
    assert ids.tolist() == [vocab.id_of("a"), UNK_ID]
    assert encode(vocab, TokenSequence((), 0)).tolist() == []


def test_special_ids_fixed():
    assert (UNK_ID, SOS_ID, EOS_ID, PAD_ID) == (0, 1, 2, 3)


def test_vocab_json_roundtrip():
    vocab = build_vocabulary([seq_of("a", "b", "a")], min_count=1)
    assert Vocabulary.from_json_dict(vocab.to_json_dict()) == vocab
