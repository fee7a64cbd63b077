"""Adapter for pretrained encoder-decoder checkpoints loaded through transformers.

``model_id`` is either a hub name (``t5-small``, ``facebook/bart-base``) or
a local directory produced by ``save_pretrained``. Imports of torch and
transformers are deferred so the rest of the package works without them.
"""

from __future__ import annotations

import copy
import logging
import random
import threading
from pathlib import Path

from avgen.backend import EarlyStopping, TrainedModel, TrainingReport, fingerprint
from avgen.pairs import SEPARATOR

logger = logging.getLogger(__name__)

_generate_lock = threading.Lock()


class Handle:
    def __init__(self, model, tokenizer):
        self.model = model
        self.tokenizer = tokenizer


def _device():
    import torch

    return torch.device("cuda" if torch.cuda.is_available() else "cpu")


def _ensure_tokens(tokenizer, special_tokens) -> int:
    added = tokenizer.add_tokens([t for t in special_tokens], special_tokens=True)
    # Some vocabularies cannot represent the pair separator.
    probe = tokenizer.decode(tokenizer(SEPARATOR, add_special_tokens=False)["input_ids"])
    if "|" not in probe:
        added += tokenizer.add_tokens(["|"])
    return added


def load_pretrained(model_id: str, special_tokens=()):
    from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = AutoModelForSeq2SeqLM.from_pretrained(model_id)
    if _ensure_tokens(tokenizer, special_tokens):
        model.resize_token_embeddings(len(tokenizer))
    return Handle(model.to(_device()), tokenizer)


def _encode(handle: Handle, sources, targets, config):
    tok = handle.tokenizer
    batch = tok(
        list(sources), max_length=config.max_input_tokens, truncation=True, padding=True, return_tensors="pt"
    )
    if targets is not None:
        labels = tok(
            text_target=list(targets),
            max_length=config.max_output_tokens,
            truncation=True,
            padding=True,
            return_tensors="pt",
        )["input_ids"]
        labels[labels == tok.pad_token_id] = -100
        batch["labels"] = labels
    return {k: v.to(_device()) for k, v in batch.items()}


def _mean_loss(handle: Handle, examples, config) -> float:
    import torch

    handle.model.eval()
    total, n = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(examples), config.batch_size):
            chunk = examples[start:start + config.batch_size]
            out = handle.model(**_encode(handle, [e.source for e in chunk], [e.target for e in chunk], config))
            total += float(out.loss) * len(chunk)
            n += len(chunk)
    return total / max(n, 1)


def train(examples, config, val_examples) -> TrainedModel:
    import torch

    torch.manual_seed(config.seed)
    handle = load_pretrained(config.model_id, config.special_tokens)
    report = TrainingReport(n_examples=len(examples), n_val_examples=len(val_examples))
    lengths = handle.tokenizer([e.source for e in examples], add_special_tokens=True)["input_ids"]
    report.truncated_sources = sum(len(ids) > config.max_input_tokens for ids in lengths)

    optimizer = torch.optim.Adam(handle.model.parameters(), lr=config.learning_rate)
    rng = random.Random(config.seed)
    stopper = EarlyStopping(config.early_stop_patience)
    best_state = None
    for epoch in range(config.epochs):
        handle.model.train()
        # Batches are drawn at random from the (possibly mixed-task) pool.
        order = list(range(len(examples)))
        rng.shuffle(order)
        for start in range(0, len(order), config.batch_size):
            chunk = [examples[i] for i in order[start:start + config.batch_size]]
            loss = handle.model(**_encode(handle, [e.source for e in chunk], [e.target for e in chunk], config)).loss
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        report.epochs_completed = epoch + 1
        val_loss = _mean_loss(handle, val_examples or examples, config)
        report.val_losses.append(val_loss)
        logger.info("epoch %d val_loss %.4f", epoch + 1, val_loss)
        improved = val_loss < stopper.best
        stop = stopper.step(val_loss)
        if improved:
            best_state = copy.deepcopy(handle.model.state_dict())
        if stop:
            report.stopped_early = report.epochs_completed < config.epochs
            break
    if best_state is not None:
        handle.model.load_state_dict(best_state)

    n_params = sum(p.numel() for p in handle.model.parameters())
    return TrainedModel(handle, config, fingerprint(examples, config), report, n_params)


def generate(model: TrainedModel, sources: list[str]) -> list[str]:
    import torch

    cfg = model.config
    handle: Handle = model.handle
    outputs: list[str] = []
    with _generate_lock, torch.no_grad():
        handle.model.eval()
        for start in range(0, len(sources), cfg.batch_size):
            batch = _encode(handle, sources[start:start + cfg.batch_size], None, cfg)
            ids = handle.model.generate(
                **batch,
                max_new_tokens=cfg.max_output_tokens,
                num_beams=cfg.num_beams,
                do_sample=False,
            )
            outputs.extend(s.strip() for s in handle.tokenizer.batch_decode(ids, skip_special_tokens=True))
    return outputs


def save(model: TrainedModel, path: Path) -> None:
    model.handle.model.save_pretrained(path / "weights")
    model.handle.tokenizer.save_pretrained(path / "weights")


def load(path: Path, config):
    return load_pretrained(str(path / "weights"))


def make_tiny_checkpoint(directory, texts, d_model: int = 32, layers: int = 2) -> Path:
    """Save a randomly initialized small T5 with a whitespace word-level vocabulary.

    Intended for offline smoke runs where no pretrained checkpoint can be
    fetched; ``texts`` should cover every source and target string.
    """
    from tokenizers import Tokenizer, models, pre_tokenizers, processors, trainers
    from transformers import PreTrainedTokenizerFast, T5Config, T5ForConditionalGeneration

    directory = Path(directory)
    specials = ["<pad>", "</s>", "<unk>"]
    tok = Tokenizer(models.WordLevel(unk_token="<unk>"))
    tok.pre_tokenizer = pre_tokenizers.WhitespaceSplit()
    tok.train_from_iterator(list(texts), trainers.WordLevelTrainer(special_tokens=specials))
    eos = tok.token_to_id("</s>")
    tok.post_processor = processors.TemplateProcessing(single="$A </s>", special_tokens=[("</s>", eos)])
    fast = PreTrainedTokenizerFast(tokenizer_object=tok, pad_token="<pad>", eos_token="</s>", unk_token="<unk>")

    pad = fast.pad_token_id
    cfg = T5Config(
        vocab_size=len(fast),
        d_model=d_model,
        d_kv=d_model // 2,
        d_ff=d_model * 2,
        num_layers=layers,
        num_decoder_layers=layers,
        num_heads=2,
        pad_token_id=pad,
        eos_token_id=fast.eos_token_id,
        decoder_start_token_id=pad,
    )
    T5ForConditionalGeneration(cfg).save_pretrained(directory)
    fast.save_pretrained(directory)
    return directory
