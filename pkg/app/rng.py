# app/rng.py
import hashlib

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """
    Генератор на Philox (counter-based): поток numpy стабилен
    между платформами и версиями, поэтому прогоны воспроизводимы побитно.
    """
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def derive_seed(master: int, *parts: object) -> int:
    """
    Дочерний сид = 64 бита BLAKE2b от (master, parts...).

    Добавление нового метода не сдвигает потоки остальных:
    каждый поток зависит только от своих частей ключа.
    """
    key = "|".join([str(int(master))] + [str(p) for p in parts])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")
