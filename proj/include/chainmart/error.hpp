#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chainmart {

// Error codes shared by every module. The HTTP layer reports these by name,
// so the spelling of errc_name() is part of the wire contract.
enum class Errc {
    // crypto
    SeedLength,
    EmptyKey,
    AuthFailure,
    BadPublicKey,
    UnwrapFailure,
    // ledger
    BadConfig,
    BadSignature,
    BadNonce,
    DuplicateTx,
    NotYourTurn,
    UnknownValidator,
    UnknownSender,
    UnknownStream,
    BadItem,
    UnknownTx,
    PendingTx,
    MalformedExport,
    // store
    EmptyPayload,
    NotFound,
    IoError,
    // tokens and escrow
    InsufficientFunds,
    ZeroAmount,
    BadTerms,
    UnknownContract,
    NotParty,
    AlreadyFunded,
    WrongState,
    BadReceiptSignature,
    PastDeadline,
    DigestMismatch,
    NoMismatch,
    NotYetTimedOut,
    // sharing
    UnsupportedValue,
    UnknownIdentity,
    DuplicateRequest,
    UnexpectedResponse,
    UnknownCategory,
    // shop
    UnknownSku,
    UnknownSession,
    UnknownCustomer,
    UnknownOrder,
    EmptyCart,
    OutOfStock,
    BadRequest,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message)
{
    throw Error(code, message);
}

} // namespace chainmart
