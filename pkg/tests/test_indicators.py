"""Indicator scoring: cosine, length, prompt rendering, HTTP providers."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlcurate.corpus import ScoreCache, ScoreRecord, Triplet
from vlcurate.errors import (
    DegenerateEmbedding,
    DimensionMismatch,
    MissingScore,
    ScoreOutOfRange,
    ScoringFailed,
    TemplateError,
    UnparseableScore,
)
from vlcurate.indicators import (
    PromptTemplate,
    RatingClient,
    RewardClient,
    clip_score,
    default_prompt_template,
    length_score,
    parse_gpt_reply,
    render_gpt_prompt,
    score_corpus,
)

from conftest import make_features, make_manifest


def test_clip_score_identical_direction():
    assert clip_score([1.0, 0.0], [1.0, 0.0]) == 1.0


def test_clip_score_orthogonal():
    assert clip_score([1.0, 0.0], [0.0, 1.0]) == 0.0


def test_clip_score_three_four():
    # dot = 24, norms = 5*5
    assert clip_score([3.0, 4.0], [4.0, 3.0]) == pytest.approx(24 / 25, abs=1e-12)


def test_clip_score_zero_norm():
    with pytest.raises(DegenerateEmbedding):
        clip_score([0.0, 0.0], [1.0, 0.0])


def test_clip_score_dim_mismatch():
    with pytest.raises(DimensionMismatch):
        clip_score([1.0, 0.0], [1.0, 0.0, 0.0])


finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(
    v=st.lists(finite, min_size=2, max_size=6),
    w=st.lists(finite, min_size=2, max_size=6),
    a=st.floats(1e-3, 1e3),
    b=st.floats(1e-3, 1e3),
)
@settings(max_examples=150)
def test_clip_score_scale_invariant_and_clamped(v, w, a, b):
    n = min(len(v), len(w))
    v, w = np.array(v[:n]), np.array(w[:n])
    if np.linalg.norm(v) < 1e-6 or np.linalg.norm(w) < 1e-6:
        return
    base = clip_score(v, w)
    assert -1.0 <= base <= 1.0
    assert clip_score(a * v, b * w) == pytest.approx(base, abs=1e-9)
    assert clip_score(w, v) == pytest.approx(base, abs=1e-12)


def test_length_score_basic():
    assert length_score("") == 0
    assert length_score("hello world") == 2


def test_length_score_114_word_paragraph():
    words = [f"w{i}" for i in range(114)]
    assert length_score(" ".join(words)) == 114


def test_length_score_whitespace_invariant():
    assert length_score("  a \t b \n c  ") == length_score("a b c") == 3


# -- prompt rendering ----------------------------------------------------

def test_render_substitutes_both_slots():
    system, user = render_gpt_prompt(
        default_prompt_template(), "Describe this image in detail.", "A cat."
    )
    assert "Instruction: Describe this image in detail." in system
    assert "Caption: A cat." in system
    assert "[Instruction]" not in system
    assert "[Caption]" not in system
    assert user  # fixed nonempty user text


def test_render_empty_instruction_allowed():
    system, _ = render_gpt_prompt(default_prompt_template(), "", "A cat.")
    assert "[Instruction]" not in system


def test_render_single_pass_substitution():
    # a slot-looking string inside the response must survive verbatim
    system, _ = render_gpt_prompt(
        default_prompt_template(), "q", "contains [Caption] literally"
    )
    assert system.count("[Caption]") == 1
    assert "contains [Caption] literally" in system


def test_render_golden_reconstruction():
    template = default_prompt_template()
    system, user = render_gpt_prompt(template, "", "")
    assert system == template.system_template.replace("[Instruction]", "").replace(
        "[Caption]", ""
    )
    assert user == template.user_template


def test_template_missing_slot():
    broken = PromptTemplate(system_template="rate [Caption] please", user_template="u")
    with pytest.raises(TemplateError):
        render_gpt_prompt(broken, "q", "r")


def test_parse_gpt_reply_contract():
    assert parse_gpt_reply("87\nThe caption is clear...") == 87.0
    assert parse_gpt_reply("  95.5 \nexplanation") == 95.5
    assert parse_gpt_reply("\n\n 42") == 42.0
    with pytest.raises(UnparseableScore):
        parse_gpt_reply("Score: high")
    with pytest.raises(UnparseableScore):
        parse_gpt_reply("")
    with pytest.raises(ScoreOutOfRange):
        parse_gpt_reply("150\nok")


# -- HTTP providers ------------------------------------------------------

def _triplet(i=0):
    return Triplet(f"t{i}", "x.png", "Describe this image in detail.", "A small cat.")


def test_rating_client_happy_path(http_stub):
    http_stub.handler = lambda payload: {"content": "50\nok"}
    client = RatingClient(http_stub.url, retries=1)
    assert client.score(_triplet()) == 50.0
    sent = http_stub.requests[0]["payload"]
    assert "Describe this image in detail." in sent["system"]
    assert "A small cat." in sent["system"]


def test_rating_client_retry_then_succeed(http_stub):
    replies = iter([{"content": "garbage"}, {"content": "nope"}, {"content": "70\nok"}])
    http_stub.handler = lambda payload: next(replies)
    client = RatingClient(http_stub.url, retries=3)
    assert client.score(_triplet()) == 70.0
    assert len(http_stub.requests) == 3


def test_rating_client_retries_exhausted(http_stub):
    http_stub.handler = lambda payload: 500
    client = RatingClient(http_stub.url, retries=2)
    with pytest.raises(ScoringFailed) as err:
        client.score(_triplet(3))
    assert err.value.sample_id == "t3"
    assert len(http_stub.requests) == 2


def test_rating_client_sends_auth_header(http_stub):
    http_stub.handler = lambda payload: {"content": "10"}
    client = RatingClient(
        http_stub.url, retries=1, headers={"Authorization": "Bearer sk-test"}
    )
    client.score(_triplet())
    assert http_stub.requests[0]["headers"]["Authorization"] == "Bearer sk-test"


def test_reward_client_values(http_stub):
    http_stub.handler = lambda payload: {"score": 1.25}
    client = RewardClient(http_stub.url, retries=1)
    assert client.score(_triplet()) == 1.25
    http_stub.handler = lambda payload: {"score": -3.0}
    assert client.score(_triplet()) == -3.0  # negatives legal, reward is unbounded
    assert http_stub.requests[-1]["payload"] == {
        "question": "Describe this image in detail.",
        "answer": "A small cat.",
    }


def test_reward_client_table_driven(http_stub):
    table = {f"answer {i}": float(i) * 0.5 - 2.0 for i in range(10)}
    http_stub.handler = lambda payload: {"score": table[payload["answer"]]}
    client = RewardClient(http_stub.url, retries=1)
    for i in range(10):
        t = Triplet(f"t{i}", "x", "q", f"answer {i}")
        assert client.score(t) == table[f"answer {i}"]


# -- corpus-level scoring -------------------------------------------------

class CountingProvider:
    """Duck-typed provider recording every call."""

    def __init__(self, value=1.0):
        self.value = value
        self.calls = []

    def score(self, triplet, template=None):
        self.calls.append(triplet.id)
        return self.value


def _full_cache(manifest):
    cache = ScoreCache()
    for t in manifest:
        cache.records[t.id] = ScoreRecord(clip=0.1, length=2, reward=0.5, gpt=40.0)
    return cache


def test_score_corpus_cache_only_passthrough():
    manifest = make_manifest(3)
    features = make_features(manifest)
    cache = _full_cache(manifest)
    before = {k: ScoreRecord(**vars(v)) for k, v in cache.records.items()}
    out = score_corpus(manifest, features, cache, None, None)
    assert out is cache
    assert cache.records == before


def test_score_corpus_fills_from_stubs():
    manifest = make_manifest(3)
    features = make_features(manifest)
    cache = ScoreCache()
    gpt, reward = CountingProvider(60.0), CountingProvider(-0.5)
    score_corpus(manifest, features, cache, gpt, reward)
    for t in manifest:
        rec = cache.records[t.id]
        assert rec.complete()
        assert rec.gpt == 60.0 and rec.reward == -0.5
        assert rec.length == length_score(t.response)
        assert rec.clip == clip_score(
            features.vector("image", t.id), features.vector("text_clip", t.id)
        )


def test_score_corpus_cache_only_missing_gpt():
    manifest = make_manifest(3)
    features = make_features(manifest)
    cache = _full_cache(manifest)
    cache.records[manifest[1].id].gpt = None
    with pytest.raises(MissingScore) as err:
        score_corpus(manifest, features, cache, None, None)
    assert err.value.sample_id == manifest[1].id
    assert err.value.indicator == "gpt"


def test_score_corpus_idempotent_zero_calls_on_rerun():
    manifest = make_manifest(5)
    features = make_features(manifest)
    cache = ScoreCache()
    gpt, reward = CountingProvider(10.0), CountingProvider(0.0)
    score_corpus(manifest, features, cache, gpt, reward)
    assert sorted(gpt.calls) == sorted(t.id for t in manifest)
    gpt.calls.clear()
    reward.calls.clear()
    score_corpus(manifest, features, cache, gpt, reward)
    assert gpt.calls == [] and reward.calls == []


def test_score_corpus_parallel_scores_each_id_once():
    manifest = make_manifest(20)
    features = make_features(manifest)
    cache = ScoreCache()
    gpt, reward = CountingProvider(50.0), CountingProvider(1.0)
    score_corpus(manifest, features, cache, gpt, reward, workers=4)
    assert sorted(gpt.calls) == sorted(t.id for t in manifest)
    assert sorted(reward.calls) == sorted(t.id for t in manifest)
    assert all(cache.records[t.id].complete() for t in manifest)


def test_instruction_does_not_leak_into_local_indicators():
    manifest = make_manifest(4)
    features = make_features(manifest)
    altered = [
        Triplet(t.id, t.image_ref, "completely different ask", t.response)
        for t in manifest
    ]
    c1, c2 = ScoreCache(), ScoreCache()
    score_corpus(manifest, features, c1, CountingProvider(5.0), CountingProvider(0.0))
    score_corpus(altered, features, c2, CountingProvider(5.0), CountingProvider(0.0))
    for t in manifest:
        assert c1.records[t.id].clip == c2.records[t.id].clip
        assert c1.records[t.id].length == c2.records[t.id].length
