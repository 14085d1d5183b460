import math
import re

import pytest
import torch


class TestModels:
    def test_roster_with_kinds(self, client):
        body = client.get("/v1/models").json()
        kinds = {m["name"]: m["kind"] for m in body["models"]}
        assert kinds == {
            "tiny-causal": "causal",
            "tiny-masked": "masked",
            "tiny-infill": "infill",
        }


class TestLogProb:
    def test_causal_shape(self, client):
        body = client.post("/v1/logprob", json={
            "model": "tiny-causal", "texts": ["the cat sat on mat"],
        })
        assert body.status_code == 200
        payload = body.json()
        assert len(payload["logprobs"]) == 1
        assert math.isfinite(payload["logprobs"][0])
        assert payload["token_counts"][0] >= 1

    def test_causal_deterministic(self, client):
        request = {"model": "tiny-causal", "texts": ["the dog ran on the hill"]}
        a = client.post("/v1/logprob", json=request).json()
        b = client.post("/v1/logprob", json=request).json()
        assert a == b

    def test_causal_matches_teacher_forcing_oracle(self, client, server_config):
        from curvens_server.backends import LoadedModel

        backend = LoadedModel("oracle", server_config.models["tiny-causal"])
        text = "the cat sat on mat dog"
        ids = backend.tokenizer(text, add_special_tokens=False)["input_ids"]
        full = [backend.tokenizer.bos_token_id] + ids
        with torch.no_grad():
            logits = backend.model(torch.tensor([full])).logits[0].float()
        expected = sum(
            torch.log_softmax(logits[i], dim=-1)[full[i + 1]].item()
            for i in range(len(ids))
        )
        got = client.post("/v1/logprob", json={
            "model": "tiny-causal", "texts": [text],
        }).json()
        assert got["logprobs"][0] == pytest.approx(expected, abs=1e-6)
        assert got["token_counts"][0] == len(ids)

    def test_masked_uses_pseudo_log_likelihood(self, client, server_config):
        from curvens_server.backends import LoadedModel

        backend = LoadedModel("oracle", server_config.models["tiny-masked"])
        text = "the bird flew on the hill"
        ids = backend.tokenizer(text)["input_ids"]
        mask_id = backend.tokenizer.mask_token_id
        expected = 0.0
        for pos in range(len(ids)):  # one-at-a-time oracle, no batching
            masked = list(ids)
            masked[pos] = mask_id
            with torch.no_grad():
                logits = backend.model(torch.tensor([masked])).logits[0, pos].float()
            expected += torch.log_softmax(logits, dim=-1)[ids[pos]].item()
        got = client.post("/v1/logprob", json={
            "model": "tiny-masked", "texts": [text],
        }).json()
        assert got["logprobs"][0] == pytest.approx(expected, abs=1e-5)
        assert got["token_counts"][0] == len(ids)

    def test_batch_order_preserved(self, client):
        texts = ["the cat sat", "dog ran", "bird flew on hill"]
        batch = client.post("/v1/logprob", json={
            "model": "tiny-causal", "texts": texts,
        }).json()
        singles = [
            client.post("/v1/logprob", json={
                "model": "tiny-causal", "texts": [t],
            }).json()["logprobs"][0]
            for t in texts
        ]
        assert batch["logprobs"] == singles

    def test_unknown_model_404(self, client):
        body = client.post("/v1/logprob", json={"model": "foo", "texts": ["hi"]})
        assert body.status_code == 404
        assert body.json() == {"error": "unknown model: foo"}

    def test_empty_texts_400(self, client):
        body = client.post("/v1/logprob", json={"model": "tiny-causal", "texts": []})
        assert body.status_code == 400
        assert "error" in body.json()

    def test_overlength_413_names_limit(self, client):
        text = " ".join(["the"] * 200)  # tiny models cap at 64 positions
        body = client.post("/v1/logprob", json={"model": "tiny-causal", "texts": [text]})
        assert body.status_code == 413
        assert "64" in body.json()["error"]
        body = client.post("/v1/logprob", json={"model": "tiny-masked", "texts": [text]})
        assert body.status_code == 413

    def test_infill_model_does_not_score(self, client):
        body = client.post("/v1/logprob", json={"model": "tiny-infill", "texts": ["hi"]})
        assert body.status_code == 400


class TestFill:
    def test_contract(self, client):
        body = client.post("/v1/fill", json={
            "model": "tiny-infill",
            "masked_text": "the <MASK:2> sat on <MASK:1> mat",
            "span_lengths": [2, 1],
            "seed": 5,
        })
        assert body.status_code == 200
        filled = body.json()["filled_text"]
        assert "<MASK" not in filled
        words = filled.split()
        assert len(words) == 7
        assert words[0] == "the"
        assert words[3] == "sat"
        assert words[4] == "on"
        assert words[6] == "mat"

    def test_deterministic(self, client):
        request = {
            "model": "tiny-infill",
            "masked_text": "the <MASK:2> flew on the hill",
            "span_lengths": [2],
            "seed": 11,
        }
        a = client.post("/v1/fill", json=request).json()
        b = client.post("/v1/fill", json=request).json()
        assert a == b

    def test_span_lengths_coerced_across_seeds(self, client):
        for seed in range(8):
            filled = client.post("/v1/fill", json={
                "model": "tiny-infill",
                "masked_text": "the cat <MASK:3> the mat",
                "span_lengths": [3],
                "seed": seed,
            }).json()["filled_text"]
            assert len(filled.split()) == 7

    def test_mismatch_400(self, client):
        body = client.post("/v1/fill", json={
            "model": "tiny-infill",
            "masked_text": "the <MASK:2> sat <MASK:2> mat",
            "span_lengths": [2],
            "seed": 0,
        })
        assert body.status_code == 400
        assert "error" in body.json()

    def test_non_infill_model_400(self, client):
        body = client.post("/v1/fill", json={
            "model": "tiny-causal",
            "masked_text": "the <MASK:1> sat",
            "span_lengths": [1],
            "seed": 0,
        })
        assert body.status_code == 400


class TestGenerate:
    def test_prefix_and_determinism(self, client):
        request = {"model": "tiny-causal", "prompt": "the cat",
                   "max_tokens": 6, "temperature": 1.0, "seed": 3}
        a = client.post("/v1/generate", json=request).json()["text"]
        b = client.post("/v1/generate", json=request).json()["text"]
        assert a == b
        assert a.startswith("the cat")

    def test_max_tokens_one(self, client):
        text = client.post("/v1/generate", json={
            "model": "tiny-causal", "prompt": "the cat",
            "max_tokens": 1, "temperature": 1.0, "seed": 1,
        }).json()["text"]
        assert len(text.split()) <= 3

    def test_temperature_zero_400(self, client):
        body = client.post("/v1/generate", json={
            "model": "tiny-causal", "prompt": "the",
            "max_tokens": 2, "temperature": 0.0, "seed": 0,
        })
        assert body.status_code == 400
        assert "error" in body.json()

    def test_non_causal_model_400(self, client):
        for name in ("tiny-masked", "tiny-infill"):
            body = client.post("/v1/generate", json={
                "model": name, "prompt": "the", "max_tokens": 2,
                "temperature": 1.0, "seed": 0,
            })
            assert body.status_code == 400

    def test_seeds_vary_output(self, client):
        texts = {
            client.post("/v1/generate", json={
                "model": "tiny-causal", "prompt": "the cat",
                "max_tokens": 8, "temperature": 1.0, "seed": seed,
            }).json()["text"]
            for seed in range(6)
        }
        assert len(texts) > 1


class TestErrorShape:
    def test_validation_errors_use_error_shape(self, client):
        body = client.post("/v1/logprob", json={"model": "tiny-causal"})
        assert body.status_code == 400
        assert set(body.json()) == {"error"}

    def test_cli_preset_prints_roster(self, capsys):
        from curvens_server.cli import main

        assert main(["--print-preset"]) == 0
        out = capsys.readouterr().out
        assert "gpt2" in out and "t5-base" in out
        assert re.search(r'"kind":\s*"infill"', out)
