from .chat import ChatProgram, Message, build_chat_program

__all__ = ["ChatProgram", "Message", "build_chat_program"]
