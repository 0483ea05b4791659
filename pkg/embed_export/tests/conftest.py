"""Shared fixtures: a tiny deterministic transformer saved to disk.

The model is a two-layer BERT with hidden size 16 and a WordPiece
tokenizer whose vocabulary forces interesting splits ("swelling" ->
swell + ##ing, "abc" -> a + ##b + ##c); everything else maps to [UNK].
"""

import pytest
import torch
from tokenizers import Tokenizer
from tokenizers.models import WordPiece
from tokenizers.normalizers import BertNormalizer
from tokenizers.pre_tokenizers import Whitespace
from tokenizers.processors import TemplateProcessing
from transformers import BertConfig, BertModel, PreTrainedTokenizerFast
from transformers.utils import logging as hf_logging

hf_logging.set_verbosity_error()
hf_logging.disable_progress_bar()

VOCAB = {
    "[PAD]": 0, "[UNK]": 1, "[CLS]": 2, "[SEP]": 3,
    "swell": 4, "##ing": 5, "pain": 6, "redu": 7, "##ced": 8,
    "rate": 9, "of": 10, "death": 11, "a": 12, "##b": 13, "##c": 14,
    "cost": 15, "care": 16,
}


@pytest.fixture(scope="session")
def tiny_model(tmp_path_factory) -> str:
    root = tmp_path_factory.mktemp("tiny_model")
    tok = Tokenizer(WordPiece(VOCAB, unk_token="[UNK]"))
    tok.normalizer = BertNormalizer(lowercase=True)
    tok.pre_tokenizer = Whitespace()
    tok.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", VOCAB["[CLS]"]), ("[SEP]", VOCAB["[SEP]"])])
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok, unk_token="[UNK]", pad_token="[PAD]",
        cls_token="[CLS]", sep_token="[SEP]", model_max_length=16)
    fast.save_pretrained(root)

    torch.manual_seed(7)
    config = BertConfig(vocab_size=len(VOCAB), hidden_size=16,
                        num_hidden_layers=2, num_attention_heads=2,
                        intermediate_size=32, max_position_embeddings=16)
    BertModel(config).save_pretrained(root)
    return str(root)
