from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load environment variables from .env file
load_dotenv()


class Settings(BaseSettings):
    # Значения по умолчанию; любое поле задается переменной NNVP_<ИМЯ> (например NNVP_SEED=7).
    # Флаги CLI важнее
    SEED: int = 0
    WORKERS: int = 0  # 0 -> все ядра
    OUT_DIR: str = "runs"
    DATA_DIR: str = "data/uci"
    LOG_LEVEL: str = "INFO"

    RESTARTS: int = 3
    MAX_EPOCHS: int = 200
    PATIENCE: int = 20

    INITIAL_SIZE: int = 50
    REPEATS: int = 10
    TEST_FRACTION: float = 0.10
    BINS: int = 100

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="NNVP_",
        env_ignore_empty=True,
        extra="ignore",
    )


settings = Settings()
