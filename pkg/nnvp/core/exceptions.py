"""Доменные ошибки. У каждой свой код возврата CLI."""


class NNVPError(Exception):
    exit_code = 1


class ConfigurationError(NNVPError):
    """Неверные флаги, файл конфигурации или сочетание параметров."""
    exit_code = 1


class DataFormatError(NNVPError):
    """
    Данные непригодны: битые строки CSV, пустые файлы, несовпадение
    размерностей, пустые разбиения или потоки.
    """
    exit_code = 2

    def __init__(self, message: str, row: int | None = None):
        self.detail = message
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)

    # Воркеры возвращают исключения через pickle
    def __reduce__(self):
        return type(self), (self.detail, self.row)


class ProbabilityVectorError(DataFormatError, ValueError):
    """На вход таксономии пришел не вектор вероятностей."""


class TrainingError(NNVPError):
    exit_code = 3

    def __init__(self, message: str, epoch: int | None = None):
        self.detail = message
        self.epoch = epoch
        super().__init__(f"{message} (epoch {epoch})" if epoch is not None else message)

    def __reduce__(self):
        return type(self), (self.detail, self.epoch)


class CandidateTrainingError(TrainingError):
    """Обучение упало при метке-кандидате `label` для нового примера."""

    def __init__(self, label: int, cause: TrainingError):
        super().__init__(f"candidate label {label}: {cause}")
        self.label = label
        self.cause = cause
        self.epoch = cause.epoch

    def __reduce__(self):
        return type(self), (self.label, self.cause)
