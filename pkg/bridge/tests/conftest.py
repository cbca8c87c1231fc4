import json

import pytest
import torch
from tokenizers import Tokenizer, models, pre_tokenizers
from transformers import PreTrainedTokenizerFast, T5Config, T5ForConditionalGeneration

WORDS = [
    "select", "count", "(*)", "from", "where", "avg", "min", "max", "age",
    "how", "many", "singers", "do", "we", "have", "?", "what", "is", "the",
    "average", "of", "all", "|", ":", ",", "concert_singer", "singer",
    "concert", "name", "country", "year", "pets_db", "student", "has_pet",
    "pets", "stuid", "petid", "pettype", "dogs", "are", "there",
]


def build_tiny_checkpoint(directory) -> str:
    """A randomly initialized 2-layer T5 with a word-level tokenizer: real
    encoder-decoder machinery, no network, CPU-fast."""
    vocab = {"<pad>": 0, "</s>": 1, "<unk>": 2, "<extra_id_0>": 3}
    for word in WORDS:
        vocab.setdefault(word, len(vocab))
    tok = Tokenizer(models.WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok,
        unk_token="<unk>",
        pad_token="<pad>",
        eos_token="</s>",
        additional_special_tokens=["<extra_id_0>"],
    )
    config = T5Config(
        vocab_size=len(vocab),
        d_model=32,
        d_kv=8,
        d_ff=64,
        num_layers=2,
        num_heads=2,
        decoder_start_token_id=0,
        pad_token_id=0,
        eos_token_id=1,
    )
    torch.manual_seed(7)
    model = T5ForConditionalGeneration(config)
    model.save_pretrained(directory)
    fast.save_pretrained(directory)
    return str(directory)


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    return build_tiny_checkpoint(tmp_path_factory.mktemp("tiny_t5"))


@pytest.fixture(scope="session")
def scorer(checkpoint):
    from hfbridge.model import Seq2SeqScorer

    return Seq2SeqScorer(checkpoint)


SPIDER_TABLES = [
    {
        "db_id": "concert_singer",
        "table_names_original": ["singer", "concert"],
        "column_names_original": [
            [-1, "*"],
            [0, "name"],
            [0, "country"],
            [0, "age"],
            [1, "name"],
            [1, "year"],
        ],
    },
    {
        "db_id": "pets_db",
        "table_names_original": ["student", "has_pet", "pets"],
        "column_names_original": [
            [-1, "*"],
            [0, "stuid"],
            [0, "age"],
            [1, "stuid"],
            [1, "petid"],
            [2, "petid"],
            [2, "pettype"],
        ],
    },
]

SPIDER_EXAMPLES = [
    {
        "db_id": "concert_singer",
        "question": "how many singers do we have ?",
        "query": "select count (*) from singer",
    },
    {
        "db_id": "concert_singer",
        "question": "what is the average age of all singers ?",
        "query": "select avg age from singer",
    },
    {
        "db_id": "concert_singer",
        "question": "how many concerts are there ?",
        "query": "select count (*) from concert",
    },
    {
        "db_id": "pets_db",
        "question": "how many dogs are there ?",
        "query": "select count (*) from pets",
    },
    {
        "db_id": "pets_db",
        "question": "what is the average age of all student ?",
        "query": "select avg age from student",
    },
]


@pytest.fixture(scope="session")
def spider_files(tmp_path_factory):
    directory = tmp_path_factory.mktemp("spider")
    tables = directory / "tables.json"
    examples = directory / "dev.json"
    tables.write_text(json.dumps(SPIDER_TABLES))
    examples.write_text(json.dumps(SPIDER_EXAMPLES))
    return examples, tables
