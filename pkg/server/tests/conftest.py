import threading

import pytest
import torch
from fastapi.testclient import TestClient
from tokenizers import Tokenizer, models, pre_tokenizers
from transformers import (
    BertConfig,
    BertForMaskedLM,
    GPT2Config,
    GPT2LMHeadModel,
    PreTrainedTokenizerFast,
    T5Config,
    T5ForConditionalGeneration,
)

from curvens_server.app import create_app
from curvens_server.config import config_from_dict

N_EXTRA_IDS = 10

WORDS = (
    ["the", "cat", "sat", "on", "mat", "dog", "ran", "hill", "bird", "flew"]
    + [f"w{i}" for i in range(40)]
)


def _tokenizer():
    specials = ["<pad>", "<unk>", "</s>", "[MASK]"] + [
        f"<extra_id_{i}>" for i in range(N_EXTRA_IDS)
    ]
    vocab = {t: i for i, t in enumerate(specials + WORDS)}
    tok = Tokenizer(models.WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = pre_tokenizers.WhitespaceSplit()
    return vocab, PreTrainedTokenizerFast(
        tokenizer_object=tok,
        unk_token="<unk>",
        pad_token="<pad>",
        eos_token="</s>",
        bos_token="</s>",
        mask_token="[MASK]",
        additional_special_tokens=[f"<extra_id_{i}>" for i in range(N_EXTRA_IDS)],
    )


@pytest.fixture(scope="session")
def checkpoints(tmp_path_factory):
    """Tiny random-weight causal/masked/infill checkpoints on disk."""
    root = tmp_path_factory.mktemp("checkpoints")
    vocab, tokenizer = _tokenizer()
    torch.manual_seed(7)

    causal_dir = root / "causal"
    GPT2LMHeadModel(GPT2Config(
        vocab_size=len(vocab), n_positions=64, n_embd=32, n_layer=2, n_head=2,
        bos_token_id=vocab["</s>"], eos_token_id=vocab["</s>"],
    )).save_pretrained(causal_dir)
    tokenizer.save_pretrained(causal_dir)

    masked_dir = root / "masked"
    BertForMaskedLM(BertConfig(
        vocab_size=len(vocab), hidden_size=32, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=64, max_position_embeddings=64,
        pad_token_id=vocab["<pad>"],
    )).save_pretrained(masked_dir)
    tokenizer.save_pretrained(masked_dir)

    infill_dir = root / "infill"
    T5ForConditionalGeneration(T5Config(
        vocab_size=len(vocab), d_model=32, num_layers=2, num_heads=2, d_ff=64,
        d_kv=8, decoder_start_token_id=vocab["<pad>"],
        pad_token_id=vocab["<pad>"], eos_token_id=vocab["</s>"],
    )).save_pretrained(infill_dir)
    tokenizer.save_pretrained(infill_dir)

    return {
        "causal": str(causal_dir),
        "masked": str(masked_dir),
        "infill": str(infill_dir),
    }


@pytest.fixture(scope="session")
def server_config(checkpoints):
    return config_from_dict({
        "models": {
            "tiny-causal": {"checkpoint": checkpoints["causal"], "kind": "causal",
                            "parameters": 60_000},
            "tiny-masked": {"checkpoint": checkpoints["masked"], "kind": "masked",
                            "parameters": 50_000},
            "tiny-infill": {"checkpoint": checkpoints["infill"], "kind": "infill",
                            "parameters": 70_000},
        },
        "max_batch": 4,
    })


@pytest.fixture(scope="session")
def app(server_config):
    return create_app(server_config)


@pytest.fixture(scope="session")
def client(app):
    with TestClient(app, raise_server_exceptions=False) as c:
        yield c


@pytest.fixture(scope="session")
def live_server(app):
    """The app on a real socket, for clients that speak plain HTTP."""
    import uvicorn

    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=0,
                                           log_level="warning"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    import time

    for _ in range(200):
        if server.started:
            break
        time.sleep(0.05)
    else:
        raise RuntimeError("server did not start")
    host, port = server.servers[0].sockets[0].getsockname()[:2]
    yield f"http://{host}:{port}"
    server.should_exit = True
    thread.join(timeout=5)
